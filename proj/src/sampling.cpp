#include "pointloc/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace pointloc {

PointCloud random_downsample(const PointCloud& cloud, std::size_t n_target, std::uint64_t seed) {
    const std::size_t n = cloud.size();
    if (n == 0) throw DataError("random_downsample: empty cloud");
    if (n_target == 0) throw DataError("random_downsample: n_target must be positive");
    if (n == n_target) return cloud;

    Rng rng(seed);
    PointCloud out;
    out.points.reserve(n_target);
    if (n > n_target) {
        // Partial Fisher-Yates: the first n_target slots are a uniform
        // sample without replacement.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < n_target; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
            std::swap(idx[i], idx[j]);
            out.points.push_back(cloud.points[idx[i]]);
        }
    } else {
        out.points = cloud.points;
        for (std::size_t i = n; i < n_target; ++i)
            out.points.push_back(cloud.points[rng.uniform_index(n)]);
    }
    return out;
}

std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t m) {
    const std::size_t n = points.size();
    if (m > n)
        throw DataError("farthest_point_sample: requested " + std::to_string(m) + " of " +
                        std::to_string(n) + " points");
    if (m == 0) return {};

    Vec3 centroid{};
    for (const Vec3& p : points) centroid = centroid + p;
    centroid = centroid * (1.0 / static_cast<double>(n));

    std::size_t first = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = points[i] - centroid;
        const double d2 = d.dot(d);
        if (d2 > best) {
            best = d2;
            first = i;
        }
    }

    std::vector<std::size_t> picks;
    picks.reserve(m);
    picks.push_back(first);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t step = 1; step < m; ++step) {
        const Vec3& last = points[picks.back()];
        std::size_t next = 0;
        double far2 = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 d = points[i] - last;
            min_d2[i] = std::min(min_d2[i], d.dot(d));
            if (min_d2[i] > far2) {
                far2 = min_d2[i];
                next = i;
            }
        }
        picks.push_back(next);
    }
    return picks;
}

NeighborIndex ball_query(const std::vector<Vec3>& points, const std::vector<Vec3>& centers,
                         double radius, std::size_t k) {
    if (!(radius > 0.0)) throw DataError("ball_query: radius must be positive");
    if (k == 0) throw DataError("ball_query: k must be positive");

    NeighborIndex out;
    out.centers = centers;
    out.k = k;
    out.valid_counts.resize(centers.size());
    out.indices.resize(centers.size() * k);

    const double r2 = radius * radius;
    std::vector<std::pair<double, std::size_t>> found;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        found.clear();
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Vec3 d = points[i] - centers[j];
            const double d2 = d.dot(d);
            if (d2 <= r2) found.emplace_back(d2, i);
        }
        if (found.empty())
            throw DataError("ball_query: no point within radius of center " + std::to_string(j));
        if (found.size() > k) {
            // Keep the k nearest so the selected set survives input
            // permutations; index only breaks exact distance ties.
            std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k) - 1,
                             found.end());
            found.resize(k);
        }
        std::sort(found.begin(), found.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });

        const std::size_t valid = found.size();
        out.valid_counts[j] = valid;
        std::size_t* row = out.indices.data() + j * k;
        for (std::size_t i = 0; i < valid; ++i) row[i] = found[i].second;
        for (std::size_t i = valid; i < k; ++i) row[i] = found[0].second;
    }
    return out;
}

std::vector<double> group_relative(const std::vector<Vec3>& points,
                                   const std::vector<double>* features, std::size_t feature_dim,
                                   const NeighborIndex& nbr) {
    const std::size_t m = nbr.centers.size();
    const std::size_t k = nbr.k;
    const std::size_t c = features ? feature_dim : 0;
    if (features && features->size() != points.size() * feature_dim)
        throw ShapeError("group_relative: features size " + std::to_string(features->size()) +
                         " does not match " + std::to_string(points.size()) + " points x " +
                         std::to_string(feature_dim) + " channels");

    std::vector<double> out(m * k * (3 + c));
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t idx = nbr.indices[j * k + s];
            if (idx >= points.size())
                throw ShapeError("group_relative: index " + std::to_string(idx) + " out of range");
            double* slot = out.data() + (j * k + s) * (3 + c);
            const Vec3 rel = points[idx] - nbr.centers[j];
            slot[0] = rel.x;
            slot[1] = rel.y;
            slot[2] = rel.z;
            if (features)
                std::copy_n(features->data() + idx * c, c, slot + 3);
        }
    }
    return out;
}

}  // namespace pointloc
