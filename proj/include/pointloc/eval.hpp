#ifndef POINTLOC_EVAL_HPP_
#define POINTLOC_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pointloc/data.hpp"
#include "pointloc/model.hpp"

namespace pointloc {

enum class Aggregate { kMean, kMedian };

Aggregate aggregate_from_string(const std::string& s);
std::string aggregate_to_string(Aggregate a);

struct FrameError {
    double terr_m = 0.0;
    double rerr_deg = 0.0;
};

/// Per-frame errors plus both aggregates; the requested one is the headline.
struct EvalReport {
    std::vector<FrameError> frames;
    double mean_terr = 0.0;
    double median_terr = 0.0;
    double mean_rerr = 0.0;
    double median_rerr = 0.0;
    std::size_t frame_count = 0;
    std::string split;
    Aggregate requested = Aggregate::kMean;
};

struct EvalResult {
    EvalReport report;
    std::vector<Pose> predictions;
    std::vector<Pose> ground_truth;
};

/// Midpoint-of-two convention for even counts.
double median_of(std::vector<double> values);

/// Per frame of the split: seeded resample, forward pass, quat_exp on the
/// predicted log-quaternion, then translation/rotation errors against ground
/// truth. Deterministic given checkpoint, manifest, and seed.
EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const DatasetManifest& manifest, Split split, Aggregate aggregate,
                    std::uint64_t resample_seed,
                    AttentionMode mode = AttentionMode::kLearned);

/// Machine-readable key: value lines.
void write_report(const std::string& path, const EvalReport& report);

/// Header plus one line per frame: index, gt pose (t, q), predicted pose
/// (t, q), translation error, rotation error. Reparsing reproduces the
/// report's errors.
void export_trajectory(const EvalReport& report, const std::vector<Pose>& predictions,
                       const std::vector<Pose>& ground_truth, const std::string& path);

}  // namespace pointloc

#endif  // POINTLOC_EVAL_HPP_
