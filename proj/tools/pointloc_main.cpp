// Command-line front end: synth, train, eval, infer, gradcheck.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pointloc/eval.hpp"
#include "pointloc/gradcheck.hpp"
#include "pointloc/loss.hpp"
#include "pointloc/optim.hpp"

using json = nlohmann::json;
using namespace pointloc;
namespace fs = std::filesystem;

namespace {

// Flat key-value run configuration. Defaults, then config file, then flags.
class RunConfig {
public:
    explicit RunConfig(std::set<std::string> known) : known_(std::move(known)) {}

    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw DataError("config: cannot open '" + path + "'");
        json parsed;
        try {
            is >> parsed;
        } catch (const json::exception& e) {
            throw DataError("config: " + path + ": " + e.what());
        }
        if (!parsed.is_object()) throw DataError("config: " + path + ": expected a flat object");
        for (const auto& [key, value] : parsed.items()) {
            if (!known_.count(key))
                throw DataError("config: unknown key '" + key + "' in " + path);
            if (value.is_object() || value.is_array())
                throw DataError("config: key '" + key + "' must be scalar");
            values_[key] = value;
        }
    }

    void set(const std::string& key, json value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second.is_string()) return it->second.get<std::string>();
        return it->second.dump();
    }

    double num(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (!it->second.is_number()) throw DataError("config: key '" + key + "' must be numeric");
        return it->second.get<double>();
    }

    std::uint64_t uint(const std::string& key, std::uint64_t fallback) const {
        return static_cast<std::uint64_t>(num(key, static_cast<double>(fallback)));
    }

    // Prints the resolved configuration and stores it beside the outputs.
    void log(const std::string& command, const std::string& out_dir) const {
        json doc = json::object();
        for (const auto& [k, v] : values_) doc[k] = v;
        doc["command"] = command;
        std::cout << "config: " << doc.dump() << "\n";
        if (!out_dir.empty() && fs::is_directory(out_dir)) {
            std::ofstream os(fs::path(out_dir) / "config.json");
            os << doc.dump(2) << "\n";
        }
    }

private:
    std::set<std::string> known_;
    std::map<std::string, json> values_;
};

ModelScale scale_from_string(const std::string& s) {
    if (s == "full") return ModelScale::full();
    if (s == "tiny") return ModelScale::tiny();
    throw DataError("unknown model scale '" + s + "' (expected full or tiny)");
}

AttentionMode attention_from_string(const std::string& s) {
    if (s == "learned") return AttentionMode::kLearned;
    if (s == "all_ones") return AttentionMode::kAllOnes;
    if (s == "off") return AttentionMode::kOff;
    throw DataError("unknown attention mode '" + s + "' (expected learned, all_ones, or off)");
}

constexpr std::uint64_t kDefaultResampleSeed = 12345;  // published eval seed

int cmd_synth(const RunConfig& rc) {
    SynthConfig sc;
    sc.frames = rc.uint("frames", 64);
    sc.beams = rc.uint("beams", 32);
    sc.azimuth_steps = rc.uint("azimuth_steps", 360);
    sc.noise_sigma = rc.num("noise_sigma", 0.01);
    sc.seed = rc.uint("seed", 0);
    const std::string out = rc.str("out");
    if (out.empty()) throw DataError("synth: --out is required");

    const DatasetManifest manifest = build_synthetic_dataset(sc, out);
    rc.log("synth", out);
    std::cout << "synth: wrote " << manifest.records.size() << " frames to " << out << "\n";
    std::cout << "synth: train/val/test = " << manifest.indices_of(Split::kTrain).size() << "/"
              << manifest.indices_of(Split::kVal).size() << "/"
              << manifest.indices_of(Split::kTest).size() << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc) {
    const std::string manifest_path = rc.str("manifest");
    if (manifest_path.empty()) throw DataError("train: --manifest is required");
    const std::string out = rc.str("out");
    if (out.empty()) throw DataError("train: --out is required");
    fs::create_directories(out);

    const ModelScale scale = scale_from_string(rc.str("scale", "full"));
    const ModelConfig cfg = ModelConfig::from_scale(scale);

    TrainConfig tc;
    tc.epochs = rc.uint("epochs", 100);
    tc.lr = rc.num("lr", 0.001);
    tc.batch_size = rc.uint("batch_size", 16);
    tc.seed = rc.uint("seed", 0);
    tc.checkpoint_every = rc.uint("checkpoint_every", 0);
    tc.max_steps = rc.uint("max_steps", 0);
    tc.attention = attention_from_string(rc.str("attention", "learned"));
    tc.out_dir = out;
    tc.checkpoint_path = (fs::path(out) / "checkpoint.ploc").string();

    const DatasetManifest manifest = load_manifest(manifest_path);
    for (const std::string& w : manifest.report.warnings) std::cout << "manifest: " << w << "\n";
    const std::vector<TrainSample> samples = load_samples(
        manifest, Split::kTrain, cfg.input_points, rc.uint("resample_seed", kDefaultResampleSeed));

    ModelParams params = init_params(cfg, tc.seed);
    AdamState state = AdamState::init(params, tc.lr);
    std::size_t start_epoch = 0;
    const std::string resume = rc.str("resume");
    if (!resume.empty()) {
        start_epoch = restore_adam(load_params(resume, params), params, state);
        state.lr = tc.lr;
        std::cout << "train: resumed from " << resume << " at epoch " << start_epoch << "\n";
    }

    rc.log("train", out);
    const TrainResult result = train(cfg, tc, samples, params, state, start_epoch);
    write_loss_log((fs::path(out) / "loss_log.tsv").string(), result.log);

    std::cout << "train: " << result.steps << " steps over " << result.log.size() << " epochs, "
              << samples.size() << " samples\n";
    if (!result.log.empty()) {
        const EpochLog& last = result.log.back();
        std::printf("train: final loss %.6f, beta %.4f, gamma %.4f\n", last.mean_loss, last.beta,
                    last.gamma);
    }
    std::cout << "train: checkpoint " << tc.checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const RunConfig& rc) {
    const std::string manifest_path = rc.str("manifest");
    const std::string checkpoint = rc.str("checkpoint");
    if (manifest_path.empty() || checkpoint.empty())
        throw DataError("eval: --manifest and --checkpoint are required");
    const std::string out = rc.str("out");

    const ModelConfig cfg = ModelConfig::from_scale(scale_from_string(rc.str("scale", "full")));
    ModelParams params = init_params(cfg, 0);
    load_params(checkpoint, params);

    const DatasetManifest manifest = load_manifest(manifest_path);
    const Split split = split_from_string(rc.str("split", "test"));
    const Aggregate aggregate = aggregate_from_string(rc.str("aggregate", "mean"));
    const AttentionMode mode = attention_from_string(rc.str("attention", "learned"));

    const EvalResult result = evaluate(cfg, params, manifest, split, aggregate,
                                       rc.uint("resample_seed", kDefaultResampleSeed), mode);
    const EvalReport& rep = result.report;

    const char* mark_mean = aggregate == Aggregate::kMean ? " <-- requested" : "";
    const char* mark_median = aggregate == Aggregate::kMedian ? " <-- requested" : "";
    std::printf("eval: split %s, %zu frames\n", rep.split.c_str(), rep.frame_count);
    std::printf("  mean   : %.4f m, %.4f deg%s\n", rep.mean_terr, rep.mean_rerr, mark_mean);
    std::printf("  median : %.4f m, %.4f deg%s\n", rep.median_terr, rep.median_rerr, mark_median);

    if (!out.empty()) {
        fs::create_directories(out);
        rc.log("eval", out);
        const std::string tag = rep.split;
        write_report((fs::path(out) / ("report_" + tag + ".txt")).string(), rep);
        export_trajectory(rep, result.predictions, result.ground_truth,
                          (fs::path(out) / ("trajectory_" + tag + ".txt")).string());
        std::cout << "eval: wrote report_" << tag << ".txt and trajectory_" << tag << ".txt to "
                  << out << "\n";
    } else {
        rc.log("eval", "");
    }
    return 0;
}

int cmd_infer(const RunConfig& rc) {
    const std::string checkpoint = rc.str("checkpoint");
    const std::string cloud_path = rc.str("cloud");
    if (checkpoint.empty() || cloud_path.empty())
        throw DataError("infer: --checkpoint and --cloud are required");

    const ModelConfig cfg = ModelConfig::from_scale(scale_from_string(rc.str("scale", "full")));
    ModelParams params = init_params(cfg, 0);
    load_params(checkpoint, params);

    const PointCloud cloud = random_downsample(load_cloud(cloud_path), cfg.input_points,
                                               rc.uint("resample_seed", kDefaultResampleSeed));
    const LogPose pred =
        predict(cfg, params, cloud, attention_from_string(rc.str("attention", "learned")));
    const Quat q = quat_canonicalize(quat_exp(pred.w));
    std::printf("%.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", pred.t.x, pred.t.y, pred.t.z, q.u, q.v1,
                q.v2, q.v3);
    return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
    const ModelConfig cfg = ModelConfig::from_scale(scale_from_string(rc.str("scale", "tiny")));
    const std::uint64_t seed = rc.uint("seed", 17);
    const double eps = rc.num("eps", 1e-6);
    const std::size_t coords = rc.uint("coords_per_tensor", 6);
    const double tol = 1e-4;

    ModelParams params = init_params(cfg, seed);
    Rng rng(mix_seed(seed, 0x6c));
    // Nudge off the init point: zero biases leave self-offset rows exactly on
    // the LeakyReLU kink, which a central difference cannot represent.
    for (std::size_t i = 0; i < params.count(); ++i)
        for (double& v : params.tensor(i).data) v += rng.uniform(-0.05, 0.05);

    PointCloud cloud;
    for (std::size_t i = 0; i < cfg.input_points; ++i)
        cloud.points.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const SamplePlan plan = build_plan(cfg, cloud);
    const LogPose target{{0.4, -0.2, 0.7}, {0.1, -0.3, 0.2}};

    std::map<std::string, double> layer_worst;
    for (std::size_t pi = 0; pi < params.count(); ++pi) {
        const auto f = [&](Tape& tape, ValueId theta) {
            TapeBinding bind;
            bind.params = &params;
            for (std::size_t i = 0; i < params.count(); ++i) {
                if (i == pi) {
                    bind.ids.push_back(theta);
                } else {
                    Tensor t = params.tensor(i);
                    t.requires_grad = false;
                    bind.ids.push_back(tape.leaf(std::move(t)));
                }
            }
            const PoseOutput pred = pointloc_forward(tape, bind, cfg, plan, AttentionMode::kLearned);
            return pose_loss(tape, pred, target, bind.id_of("loss/beta"), bind.id_of("loss/gamma"));
        };
        FiniteDiffOptions opt;
        opt.eps = eps;
        opt.max_coords = coords;
        opt.coord_seed = mix_seed(seed, 100 + pi);
        const double err = finite_diff_check(f, params.tensor(pi), opt);
        const std::string layer = params.name(pi).substr(0, params.name(pi).find('/'));
        layer_worst[layer] = std::max(layer_worst[layer], err);
    }

    rc.log("gradcheck", "");
    bool all_pass = true;
    std::printf("%-8s %-14s %s\n", "layer", "max_rel_err", "status");
    for (const auto& [layer, err] : layer_worst) {
        const bool pass = err < tol;
        all_pass &= pass;
        std::printf("%-8s %-14.3e %s\n", layer.c_str(), err, pass ? "PASS" : "FAIL");
    }
    if (!all_pass)
        throw NumericError("gradcheck: at least one layer exceeded " + std::to_string(tol));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep 6-DoF pose regression on LiDAR point clouds"};
    app.require_subcommand(1);

    std::map<std::string, std::string> str_flags;
    std::map<std::string, std::int64_t> int_flags;
    std::map<std::string, double> num_flags;

    const auto add_str = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                             const char* help = "") {
        cmd->add_option_function<std::string>(
            flag, [&str_flags, key](const std::string& v) { str_flags[key] = v; }, help);
    };
    const auto add_int = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                             const char* help = "") {
        cmd->add_option_function<std::int64_t>(
            flag, [&int_flags, key](std::int64_t v) { int_flags[key] = v; }, help);
    };
    const auto add_num = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                             const char* help = "") {
        cmd->add_option_function<double>(
            flag, [&num_flags, key](double v) { num_flags[key] = v; }, help);
    };
    const auto add_common = [&](CLI::App* cmd) {
        add_str(cmd, "--config", "config", "JSON config file (flat object)");
        add_int(cmd, "--seed", "seed", "base RNG seed");
        add_str(cmd, "--out", "out", "output directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scan dataset");
    add_common(synth);
    add_int(synth, "--frames", "frames");
    add_int(synth, "--beams", "beams");
    add_int(synth, "--azimuth-steps", "azimuth_steps");
    add_num(synth, "--noise-sigma", "noise_sigma");

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd);
    add_str(train_cmd, "--manifest", "manifest");
    add_int(train_cmd, "--epochs", "epochs");
    add_num(train_cmd, "--lr", "lr");
    add_int(train_cmd, "--batch-size", "batch_size");
    add_str(train_cmd, "--scale", "scale", "full or tiny");
    add_str(train_cmd, "--attention", "attention", "learned, all_ones, or off");
    add_int(train_cmd, "--checkpoint-every", "checkpoint_every");
    add_int(train_cmd, "--max-steps", "max_steps");
    add_str(train_cmd, "--resume", "resume");
    add_int(train_cmd, "--resample-seed", "resample_seed");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    add_str(eval_cmd, "--manifest", "manifest");
    add_str(eval_cmd, "--checkpoint", "checkpoint");
    add_str(eval_cmd, "--split", "split", "train, val, or test");
    add_str(eval_cmd, "--aggregate", "aggregate", "mean or median");
    add_str(eval_cmd, "--scale", "scale");
    add_str(eval_cmd, "--attention", "attention");
    add_int(eval_cmd, "--resample-seed", "resample_seed");

    CLI::App* infer_cmd = app.add_subcommand("infer", "predict one pose from a cloud file");
    add_common(infer_cmd);
    add_str(infer_cmd, "--checkpoint", "checkpoint");
    add_str(infer_cmd, "--cloud", "cloud");
    add_str(infer_cmd, "--scale", "scale");
    add_str(infer_cmd, "--attention", "attention");
    add_int(infer_cmd, "--resample-seed", "resample_seed");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit per layer");
    add_common(grad_cmd);
    add_str(grad_cmd, "--scale", "scale");
    add_num(grad_cmd, "--eps", "eps");
    add_int(grad_cmd, "--coords-per-tensor", "coords_per_tensor");

    const std::map<std::string, std::set<std::string>> known_keys = {
        {"synth", {"config", "seed", "out", "frames", "beams", "azimuth_steps", "noise_sigma"}},
        {"train",
         {"config", "seed", "out", "manifest", "epochs", "lr", "batch_size", "scale", "attention",
          "checkpoint_every", "max_steps", "resume", "resample_seed"}},
        {"eval",
         {"config", "seed", "out", "manifest", "checkpoint", "split", "aggregate", "scale",
          "attention", "resample_seed"}},
        {"infer",
         {"config", "seed", "out", "checkpoint", "cloud", "scale", "attention", "resample_seed"}},
        {"gradcheck", {"config", "seed", "out", "scale", "eps", "coords_per_tensor"}},
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        RunConfig rc(known_keys.at(command));
        const auto cfg_it = str_flags.find("config");
        if (cfg_it != str_flags.end()) rc.load_file(cfg_it->second);
        for (const auto& [key, v] : str_flags)
            if (key != "config") rc.set(key, v);
        for (const auto& [key, v] : int_flags) rc.set(key, v);
        for (const auto& [key, v] : num_flags) rc.set(key, v);

        if (command == "synth") return cmd_synth(rc);
        if (command == "train") return cmd_train(rc);
        if (command == "eval") return cmd_eval(rc);
        if (command == "infer") return cmd_infer(rc);
        if (command == "gradcheck") return cmd_gradcheck(rc);
        std::cerr << "unknown command\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
