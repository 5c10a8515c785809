#include "pointloc/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace pointloc {

namespace {

constexpr char kCloudMagic[4] = {'P', 'C', 'L', 'D'};
constexpr std::uint32_t kCloudVersion = 1;
constexpr double kPi = 3.14159265358979323846;

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

void put_f32(std::ostream& os, float f) {
    const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
    put_u32(os, v);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::kTrain;
    if (s == "val") return Split::kVal;
    if (s == "test") return Split::kTest;
    throw DataError("unknown split '" + s + "' (expected train, val, or test)");
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

std::vector<std::size_t> DatasetManifest::indices_of(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

std::string DatasetManifest::resolve(std::size_t index) const {
    const fs::path p(records.at(index).cloud_path);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (fs::path(base_dir) / p).string();
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
    if (cloud.size() == 0) throw DataError("write_cloud: refusing to write an empty cloud");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("write_cloud: cannot open '" + path + "'");
    os.write(kCloudMagic, 4);
    put_u32(os, kCloudVersion);
    put_u32(os, static_cast<std::uint32_t>(cloud.size()));
    for (const Vec3& p : cloud.points) {
        put_f32(os, static_cast<float>(p.x));
        put_f32(os, static_cast<float>(p.y));
        put_f32(os, static_cast<float>(p.z));
    }
    if (!os) throw DataError("write_cloud: write failed for '" + path + "'");
}

PointCloud load_cloud(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_cloud: cannot open '" + path + "'");
    is.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(is.tellg());
    is.seekg(0);

    std::vector<unsigned char> buf(file_size);
    if (file_size > 0) is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(file_size));
    if (!is) throw DataError("load_cloud: read failed for '" + path + "'");

    const auto fail = [&](std::size_t offset, const std::string& what) -> void {
        throw DataError("load_cloud: " + path + ": " + what + " at byte offset " +
                        std::to_string(offset));
    };
    if (file_size < 12) fail(file_size, "truncated header");
    if (std::memcmp(buf.data(), kCloudMagic, 4) != 0) fail(0, "bad magic");

    const auto u32_at = [&](std::size_t off) {
        return static_cast<std::uint32_t>(buf[off]) | (static_cast<std::uint32_t>(buf[off + 1]) << 8) |
               (static_cast<std::uint32_t>(buf[off + 2]) << 16) |
               (static_cast<std::uint32_t>(buf[off + 3]) << 24);
    };
    const std::uint32_t version = u32_at(4);
    if (version != kCloudVersion) fail(4, "unsupported version " + std::to_string(version));
    const std::uint32_t count = u32_at(8);
    if (count == 0) fail(8, "file declares 0 points");
    const std::uint64_t expected = 12 + std::uint64_t{count} * 12;
    if (file_size != expected)
        fail(std::min<std::uint64_t>(file_size, expected),
             "payload length " + std::to_string(file_size - 12) + " disagrees with declared count " +
                 std::to_string(count));

    PointCloud cloud;
    cloud.points.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        double coord[3];
        for (int a = 0; a < 3; ++a) {
            const std::size_t off = 12 + (std::size_t{i} * 3 + static_cast<std::size_t>(a)) * 4;
            const float f = std::bit_cast<float>(u32_at(off));
            if (!std::isfinite(f)) fail(off, "non-finite coordinate");
            coord[a] = static_cast<double>(f);
        }
        cloud.points[i] = {coord[0], coord[1], coord[2]};
    }
    return cloud;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_manifest: cannot open '" + path + "'");

    DatasetManifest manifest;
    manifest.base_dir = fs::path(path).parent_path().string();

    std::map<std::string, Split> sequence_split;
    std::set<std::string> seen_paths;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(trim(field));
        if (fields.size() != 10)
            throw DataError("load_manifest: " + path + ":" + std::to_string(line_no) + ": expected 10 fields, got " +
                            std::to_string(fields.size()));

        ManifestRecord rec;
        rec.cloud_path = fields[0];
        double nums[7];
        for (int i = 0; i < 7; ++i) {
            try {
                nums[i] = std::stod(fields[1 + i]);
            } catch (const std::exception&) {
                throw DataError("load_manifest: " + path + ":" + std::to_string(line_no) +
                                ": bad number '" + fields[1 + i] + "'");
            }
            if (!std::isfinite(nums[i]))
                throw DataError("load_manifest: " + path + ":" + std::to_string(line_no) +
                                ": non-finite pose value");
        }
        rec.pose.t = {nums[0], nums[1], nums[2]};
        Quat q{nums[3], nums[4], nums[5], nums[6]};
        if (std::fabs(q.norm() - 1.0) > 1e-9) {
            ++manifest.report.normalized_quaternions;
            manifest.report.warnings.push_back("line " + std::to_string(line_no) +
                                               ": quaternion normalized (norm was " +
                                               std::to_string(q.norm()) + ")");
        }
        rec.pose.q = quat_canonicalize(quat_normalize(q));
        rec.sequence = fields[8];
        rec.split = split_from_string(fields[9]);

        const auto it = sequence_split.find(rec.sequence);
        if (it == sequence_split.end()) {
            sequence_split.emplace(rec.sequence, rec.split);
        } else if (it->second != rec.split) {
            throw DataError("load_manifest: " + path + ":" + std::to_string(line_no) + ": sequence '" +
                            rec.sequence + "' appears in splits '" + split_to_string(it->second) +
                            "' and '" + split_to_string(rec.split) + "'");
        }
        if (!seen_paths.insert(rec.cloud_path).second)
            manifest.report.warnings.push_back("line " + std::to_string(line_no) +
                                               ": duplicate frame path '" + rec.cloud_path +
                                               "' (kept)");
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_manifest: cannot open '" + path + "'");
    os << "# cloud_path, tx, ty, tz, qw, qx, qy, qz, sequence, split\n";
    char buf[512];
    for (const ManifestRecord& r : records) {
        std::snprintf(buf, sizeof(buf),
                      "%s, %.17g, %.17g, %.17g, %.17g, %.17g, %.17g, %.17g, %s, %s\n",
                      r.cloud_path.c_str(), r.pose.t.x, r.pose.t.y, r.pose.t.z, r.pose.q.u,
                      r.pose.q.v1, r.pose.q.v2, r.pose.q.v3, r.sequence.c_str(),
                      split_to_string(r.split).c_str());
        os << buf;
    }
    if (!os) throw DataError("write_manifest: write failed for '" + path + "'");
}

SyntheticScene generate_scene(std::uint64_t seed) {
    SyntheticScene scene;
    scene.seed = seed;
    // World origin on the floor at room center, motion-capture style.
    scene.room = {{-2.0, -2.5, 0.0}, {2.0, 2.5, 3.0}};

    Rng rng(mix_seed(seed, 0x5ce9e));
    const std::size_t n_boxes = 6 + rng.uniform_index(7);  // 6..12
    for (std::size_t i = 0; i < n_boxes; ++i) {
        if (i % 2 == 0) {
            // Tall shelf against a wall; anchored within 0.3 m of it and at
            // most 0.4 m deep, so the sensor path through the middle of the
            // room stays clear.
            const double depth = rng.uniform(0.2, 0.4);
            const double width = rng.uniform(0.5, 1.4);
            const double sz = rng.uniform(1.6, 2.6);
            const std::size_t wall = rng.uniform_index(4);
            double x, y, sx, sy;
            if (wall < 2) {  // x-facing wall
                sx = depth;
                sy = width;
                x = wall == 0 ? scene.room.lo.x + rng.uniform(0.0, 0.3)
                              : scene.room.hi.x - depth - rng.uniform(0.0, 0.3);
                y = rng.uniform(scene.room.lo.y + 0.1, scene.room.hi.y - width - 0.1);
            } else {  // y-facing wall
                sx = width;
                sy = depth;
                x = rng.uniform(scene.room.lo.x + 0.1, scene.room.hi.x - width - 0.1);
                y = wall == 2 ? scene.room.lo.y + rng.uniform(0.0, 0.3)
                              : scene.room.hi.y - depth - rng.uniform(0.0, 0.3);
            }
            scene.boxes.push_back({{x, y, 0.0}, {x + sx, y + sy, sz}});
        } else {
            // Low clutter anywhere on the floor, below sensor height.
            const double sx = rng.uniform(0.3, 1.2);
            const double sy = rng.uniform(0.3, 1.2);
            const double sz = rng.uniform(0.3, 0.9);
            const double x = rng.uniform(scene.room.lo.x + 0.1, scene.room.hi.x - sx - 0.1);
            const double y = rng.uniform(scene.room.lo.y + 0.1, scene.room.hi.y - sy - 0.1);
            scene.boxes.push_back({{x, y, 0.0}, {x + sx, y + sy, sz}});
        }
    }
    return scene;
}

namespace {

/// Slab intersection returning [t_enter, t_exit]; empty when missed.
bool ray_aabb(const Vec3& origin, const Vec3& dir, const Aabb& box, double* t_enter,
              double* t_exit) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double bl[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double bh[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < bl[a] || o[a] > bh[a]) return false;
            continue;
        }
        double t0 = (bl[a] - o[a]) / d[a];
        double t1 = (bh[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
        if (lo > hi) return false;
    }
    *t_enter = lo;
    *t_exit = hi;
    return true;
}

double aabb_surface_distance(const Vec3& p, const Aabb& box) {
    const double ex = std::max({box.lo.x - p.x, 0.0, p.x - box.hi.x});
    const double ey = std::max({box.lo.y - p.y, 0.0, p.y - box.hi.y});
    const double ez = std::max({box.lo.z - p.z, 0.0, p.z - box.hi.z});
    const double outside = std::sqrt(ex * ex + ey * ey + ez * ez);
    if (outside > 0.0) return outside;
    const double dx = std::min(p.x - box.lo.x, box.hi.x - p.x);
    const double dy = std::min(p.y - box.lo.y, box.hi.y - p.y);
    const double dz = std::min(p.z - box.lo.z, box.hi.z - p.z);
    return std::min({dx, dy, dz});
}

}  // namespace

double surface_distance(const SyntheticScene& scene, const Vec3& p) {
    // Room shell: inside, distance to the nearest wall; outside, distance back.
    double best;
    if (scene.room.contains(p)) {
        best = std::min({p.x - scene.room.lo.x, scene.room.hi.x - p.x, p.y - scene.room.lo.y,
                         scene.room.hi.y - p.y, p.z - scene.room.lo.z, scene.room.hi.z - p.z});
    } else {
        best = aabb_surface_distance(p, scene.room);
    }
    for (const Aabb& box : scene.boxes) best = std::min(best, aabb_surface_distance(p, box));
    return best;
}

PointCloud simulate_scan(const SyntheticScene& scene, const Pose& pose, std::size_t beams,
                         std::size_t azimuth_steps, double noise_sigma, std::uint64_t seed) {
    if (beams == 0 || azimuth_steps == 0)
        throw DataError("simulate_scan: beams and azimuth_steps must be positive");
    if (!scene.room.contains(pose.t))
        throw DataError("simulate_scan: pose lies outside the room");

    Rng rng(mix_seed(seed, 0x5ca9));
    PointCloud cloud;
    cloud.points.reserve(beams * azimuth_steps);

    const double elev_span = 40.0 * kPi / 180.0;
    for (std::size_t b = 0; b < beams; ++b) {
        const double elev =
            beams == 1 ? 0.0 : -elev_span / 2 + elev_span * static_cast<double>(b) / (beams - 1);
        const double ce = std::cos(elev);
        const double se = std::sin(elev);
        for (std::size_t a = 0; a < azimuth_steps; ++a) {
            const double az = 2.0 * kPi * static_cast<double>(a) / static_cast<double>(azimuth_steps);
            const Vec3 dir_sensor{ce * std::cos(az), ce * std::sin(az), se};
            const Vec3 dir_world = quat_rotate(pose.q, dir_sensor);

            double t_enter, t_exit;
            double range = std::numeric_limits<double>::infinity();
            if (ray_aabb(pose.t, dir_world, scene.room, &t_enter, &t_exit) && t_exit > 0.0)
                range = t_exit;  // inward-facing room shell
            for (const Aabb& box : scene.boxes) {
                if (ray_aabb(pose.t, dir_world, box, &t_enter, &t_exit) && t_enter > 1e-9 &&
                    t_enter < range)
                    range = t_enter;
            }
            if (!std::isfinite(range)) continue;  // miss

            // Truncated at 3 sigma so every return stays on a surface.
            if (noise_sigma > 0.0)
                range += std::clamp(noise_sigma * rng.normal(), -3.0 * noise_sigma,
                                    3.0 * noise_sigma);
            if (range <= 0.0) continue;
            cloud.points.push_back(dir_sensor * range);
        }
    }
    if (cloud.size() == 0) throw DataError("simulate_scan: no returns");
    return cloud;
}

Pose trajectory_pose(const SyntheticScene& scene, std::uint64_t seed, std::size_t i, std::size_t n) {
    Rng rng(mix_seed(seed, 0x7ca1));
    const double phase_z = rng.uniform(0.0, 2.0 * kPi);
    const double phase_yaw = rng.uniform(0.0, 2.0 * kPi);
    const double phase_pitch = rng.uniform(0.0, 2.0 * kPi);
    const double amp_yaw = rng.uniform(0.2, 0.4);

    const Vec3 center = (scene.room.lo + scene.room.hi) * 0.5;
    const double rx = 0.3 * (scene.room.hi.x - scene.room.lo.x);
    const double ry = 0.3 * (scene.room.hi.y - scene.room.lo.y);
    const double theta = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);

    // Wheeled-platform motion: the sensor stays near a fixed height and the
    // attitude wobble is vibration-level; heading follows the loop tangent.
    Pose pose;
    pose.t = {center.x + rx * std::cos(theta), center.y + ry * std::sin(theta),
              1.4 + 0.02 * std::sin(2.0 * theta + phase_z)};
    const double yaw = theta + kPi / 2 + amp_yaw * std::sin(3.0 * theta + phase_yaw);
    const double pitch = 0.02 * std::sin(2.0 * theta + phase_pitch);
    const double roll = 0.015 * std::sin(theta + phase_z);
    pose.q = quat_canonicalize(quat_from_yaw_pitch_roll(yaw, pitch, roll));
    return pose;
}

DatasetManifest build_synthetic_dataset(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.frames == 0) throw DataError("build_synthetic_dataset: frames must be positive");
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir))
        throw DataError("build_synthetic_dataset: cannot create output directory '" + out_dir + "'");

    const SyntheticScene scene = generate_scene(cfg.seed);
    std::vector<ManifestRecord> records;
    records.reserve(cfg.frames);

    const std::size_t train_end = (cfg.frames * 7 + 9) / 10;  // 70 percent
    const std::size_t val_end = (cfg.frames * 8 + 9) / 10;    // next 10 percent
    for (std::size_t i = 0; i < cfg.frames; ++i) {
        const Pose pose = trajectory_pose(scene, cfg.seed, i, cfg.frames);
        const PointCloud scan =
            simulate_scan(scene, pose, cfg.beams, cfg.azimuth_steps, cfg.noise_sigma,
                          mix_seed(cfg.seed, 1000 + i));
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%05zu.pcld", i);
        write_cloud((dir / name).string(), scan);

        ManifestRecord rec;
        rec.cloud_path = name;
        rec.pose = pose;
        if (i < train_end) {
            rec.sequence = "seg-a";
            rec.split = Split::kTrain;
        } else if (i < val_end) {
            rec.sequence = "seg-b";
            rec.split = Split::kVal;
        } else {
            rec.sequence = "seg-c";
            rec.split = Split::kTest;
        }
        records.push_back(std::move(rec));
    }

    // Manifest lands last, via rename, so interrupted builds leave no
    // half-written manifest behind.
    const fs::path manifest_path = dir / "manifest.txt";
    const fs::path tmp_path = dir / "manifest.txt.tmp";
    write_manifest(tmp_path.string(), records);
    fs::rename(tmp_path, manifest_path);
    return load_manifest(manifest_path.string());
}

std::vector<TrainSample> load_samples(const DatasetManifest& manifest, Split split,
                                      std::size_t n_points, std::uint64_t resample_seed) {
    std::vector<TrainSample> samples;
    for (std::size_t idx : manifest.indices_of(split)) {
        const ManifestRecord& rec = manifest.records[idx];
        TrainSample s;
        s.cloud = random_downsample(load_cloud(manifest.resolve(idx)), n_points,
                                    mix_seed(resample_seed, idx));
        s.target = {rec.pose.t, quat_log(rec.pose.q)};
        s.frame = rec.cloud_path;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace pointloc
