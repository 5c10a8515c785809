#include "pointloc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace pointloc {

Aggregate aggregate_from_string(const std::string& s) {
    if (s == "mean") return Aggregate::kMean;
    if (s == "median") return Aggregate::kMedian;
    throw DataError("unknown aggregate '" + s + "' (expected mean or median)");
}

std::string aggregate_to_string(Aggregate a) {
    return a == Aggregate::kMean ? "mean" : "median";
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw DataError("median_of: empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params,
                    const DatasetManifest& manifest, Split split, Aggregate aggregate,
                    std::uint64_t resample_seed, AttentionMode mode) {
    const std::vector<std::size_t> indices = manifest.indices_of(split);
    if (indices.empty())
        throw DataError("evaluate: split '" + split_to_string(split) + "' is empty");

    EvalResult result;
    result.report.split = split_to_string(split);
    result.report.requested = aggregate;

    std::vector<double> terrs, rerrs;
    for (std::size_t idx : indices) {
        const ManifestRecord& rec = manifest.records[idx];
        const PointCloud cloud = random_downsample(load_cloud(manifest.resolve(idx)),
                                                   cfg.input_points, mix_seed(resample_seed, idx));
        const LogPose pred = predict(cfg, params, cloud, mode);
        Pose pred_pose;
        pred_pose.t = pred.t;
        pred_pose.q = quat_canonicalize(quat_exp(pred.w));

        FrameError err;
        err.terr_m = translation_error_m(rec.pose.t, pred_pose.t);
        err.rerr_deg = rotation_error_deg(rec.pose.q, pred_pose.q);
        result.report.frames.push_back(err);
        result.predictions.push_back(pred_pose);
        result.ground_truth.push_back(rec.pose);
        terrs.push_back(err.terr_m);
        rerrs.push_back(err.rerr_deg);
    }

    result.report.frame_count = terrs.size();
    result.report.mean_terr =
        std::accumulate(terrs.begin(), terrs.end(), 0.0) / static_cast<double>(terrs.size());
    result.report.mean_rerr =
        std::accumulate(rerrs.begin(), rerrs.end(), 0.0) / static_cast<double>(rerrs.size());
    result.report.median_terr = median_of(terrs);
    result.report.median_rerr = median_of(rerrs);
    return result;
}

void write_report(const std::string& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_report: cannot open '" + path + "'");
    char buf[128];
    os << "split: " << report.split << "\n";
    os << "frames: " << report.frame_count << "\n";
    os << "aggregate: " << aggregate_to_string(report.requested) << "\n";
    std::snprintf(buf, sizeof(buf), "mean_translation_error_m: %.17g\n", report.mean_terr);
    os << buf;
    std::snprintf(buf, sizeof(buf), "median_translation_error_m: %.17g\n", report.median_terr);
    os << buf;
    std::snprintf(buf, sizeof(buf), "mean_rotation_error_deg: %.17g\n", report.mean_rerr);
    os << buf;
    std::snprintf(buf, sizeof(buf), "median_rotation_error_deg: %.17g\n", report.median_rerr);
    os << buf;
}

void export_trajectory(const EvalReport& report, const std::vector<Pose>& predictions,
                       const std::vector<Pose>& ground_truth, const std::string& path) {
    if (predictions.empty()) throw DataError("export_trajectory: empty prediction list");
    if (predictions.size() != ground_truth.size() || predictions.size() != report.frames.size())
        throw ShapeError("export_trajectory: prediction/ground-truth/report sizes disagree");

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("export_trajectory: cannot open '" + path + "'");
    os << "# index gt_tx gt_ty gt_tz gt_qw gt_qx gt_qy gt_qz "
          "pred_tx pred_ty pred_tz pred_qw pred_qx pred_qy pred_qz terr_m rerr_deg\n";
    char buf[768];
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Pose& g = ground_truth[i];
        const Pose& p = predictions[i];
        std::snprintf(buf, sizeof(buf),
                      "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                      "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      i, g.t.x, g.t.y, g.t.z, g.q.u, g.q.v1, g.q.v2, g.q.v3, p.t.x, p.t.y, p.t.z,
                      p.q.u, p.q.v1, p.q.v2, p.q.v3, report.frames[i].terr_m,
                      report.frames[i].rerr_deg);
        os << buf;
    }
    if (!os) throw DataError("export_trajectory: write failed for '" + path + "'");
}

}  // namespace pointloc
