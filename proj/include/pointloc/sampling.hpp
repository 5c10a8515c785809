#ifndef POINTLOC_SAMPLING_HPP_
#define POINTLOC_SAMPLING_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "pointloc/geometry.hpp"

namespace pointloc {

/// Sensor-frame point cloud, meters.
struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
};

/// Per-center neighborhoods found by ball_query. Row j holds valid_counts[j]
/// in-radius point indices sorted ascending, padded by repeating the first.
struct NeighborIndex {
    std::vector<Vec3> centers;          // M
    std::vector<std::size_t> indices;   // M * K, row-major
    std::vector<std::size_t> valid_counts;  // M
    std::size_t k = 0;
};

/// Resamples to exactly n_target points: a uniform subset when the cloud is
/// larger, the identity when equal, and all points plus uniform re-draws when
/// smaller. Deterministic per seed.
PointCloud random_downsample(const PointCloud& cloud, std::size_t n_target, std::uint64_t seed);

/// Greedy max-min selection of m indices. Seeded from the point farthest from
/// the centroid; all ties break toward the lowest index. Returned in pick order.
std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t m);

/// Up to k points within radius of each center; when more qualify, the k
/// nearest are kept so the selected point set is independent of input order.
/// A center with no in-radius point raises DataError naming the center.
NeighborIndex ball_query(const std::vector<Vec3>& points, const std::vector<Vec3>& centers,
                         double radius, std::size_t k);

/// Slot (j, i) = concat(x_idx - center_j, features[idx]); {M, K, 3 + C} flat,
/// row-major. With no features the output is {M, K, 3}.
std::vector<double> group_relative(const std::vector<Vec3>& points,
                                   const std::vector<double>* features, std::size_t feature_dim,
                                   const NeighborIndex& nbr);

}  // namespace pointloc

#endif  // POINTLOC_SAMPLING_HPP_
