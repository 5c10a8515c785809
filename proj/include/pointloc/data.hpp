#ifndef POINTLOC_DATA_HPP_
#define POINTLOC_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pointloc/geometry.hpp"
#include "pointloc/sampling.hpp"

namespace pointloc {

enum class Split { kTrain, kVal, kTest };

Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

struct ManifestRecord {
    std::string cloud_path;  // relative paths resolve against the manifest dir
    Pose pose;               // quaternion normalized and canonical after load
    std::string sequence;
    Split split = Split::kTrain;
};

struct LoadReport {
    std::size_t normalized_quaternions = 0;
    std::vector<std::string> warnings;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::string base_dir;
    LoadReport report;

    std::vector<std::size_t> indices_of(Split split) const;
    std::string resolve(std::size_t index) const;
};

/// Binary cloud file: magic "PCLD", version u32, point count u32, then
/// count x 3 little-endian float32 coordinates.
void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud load_cloud(const std::string& path);

/// One record per line: cloud_path, tx, ty, tz, qw, qx, qy, qz, sequence,
/// split - comma-separated, '#' comments allowed.
DatasetManifest load_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

struct Aabb {
    Vec3 lo, hi;

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }
};

/// A bounded room with box obstacles; same seed, same scene.
struct SyntheticScene {
    Aabb room;
    std::vector<Aabb> boxes;
    std::uint64_t seed = 0;
};

/// 4m x 5m x 3m room with 6-12 floor-standing boxes. Box heights stay below
/// sensor level so trajectories above ~1m never start inside an obstacle.
SyntheticScene generate_scene(std::uint64_t seed);

/// Distance from a world point to the nearest scene surface (room shell or
/// any box face).
double surface_distance(const SyntheticScene& scene, const Vec3& p);

/// Casts beams x azimuth_steps rays (elevation +-20 deg, azimuth full circle)
/// from the pose, returning first hits in the sensor frame with seeded
/// Gaussian range noise. Misses are dropped.
PointCloud simulate_scan(const SyntheticScene& scene, const Pose& pose, std::size_t beams,
                         std::size_t azimuth_steps, double noise_sigma, std::uint64_t seed);

struct SynthConfig {
    std::size_t frames = 64;
    std::size_t beams = 32;
    std::size_t azimuth_steps = 360;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;
};

/// One fixed scene, poses on a smooth seeded loop, scans written as cloud
/// files plus a manifest split 70/10/20 into train/val/test by trajectory
/// segment. Returns the loaded-back manifest.
DatasetManifest build_synthetic_dataset(const SynthConfig& cfg, const std::string& out_dir);

/// Smooth loop pose for frame i of n (exposed for tests).
Pose trajectory_pose(const SyntheticScene& scene, std::uint64_t seed, std::size_t i, std::size_t n);

struct TrainSample {
    PointCloud cloud;  // resampled to n_points
    LogPose target;
    std::string frame;
};

/// Loads and resamples every cloud of a split; per-frame resample seeds are
/// derived from (resample_seed, manifest index) so training and evaluation
/// see identical inputs.
std::vector<TrainSample> load_samples(const DatasetManifest& manifest, Split split,
                                      std::size_t n_points, std::uint64_t resample_seed);

}  // namespace pointloc

#endif  // POINTLOC_DATA_HPP_
