#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pointloc/eval.hpp"
#include "pointloc/optim.hpp"

using namespace pointloc;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("median uses the midpoint convention, checked against sorting") {
    CHECK(median_of({1.0, 2.0, 9.0}) == 2.0);
    CHECK(median_of({1.0, 2.0, 3.0, 10.0}) == 2.5);
    CHECK_THROWS_AS(median_of({}), DataError);

    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(20);
        std::vector<double> values(n);
        for (double& v : values) v = rng.uniform(-10, 10);
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const double expected =
            n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        CHECK(median_of(values) == expected);
    }
}

TEST_CASE("mean and median of {1,2,9}") {
    std::vector<double> errs{1, 2, 9};
    const double mean = (1 + 2 + 9) / 3.0;
    CHECK(mean == 4.0);
    CHECK(median_of(errs) == 2.0);
}

struct EvalFixture {
    std::string dir;
    ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    DatasetManifest manifest;
    ModelParams params = init_params(cfg, 80);

    EvalFixture() : dir(temp_dir("ploc_test_eval")) {
        SynthConfig sc;
        sc.frames = 10;
        sc.beams = 8;
        sc.azimuth_steps = 60;
        sc.seed = 21;
        manifest = build_synthetic_dataset(sc, dir);
    }
    ~EvalFixture() { fs::remove_all(dir); }
};

TEST_CASE("evaluate produces aggregates consistent with per-frame errors") {
    EvalFixture fx;
    const EvalResult result =
        evaluate(fx.cfg, fx.params, fx.manifest, Split::kTrain, Aggregate::kMedian, 999);
    const EvalReport& rep = result.report;
    REQUIRE(rep.frame_count == fx.manifest.indices_of(Split::kTrain).size());
    REQUIRE(rep.frames.size() == rep.frame_count);

    std::vector<double> terrs, rerrs;
    double tsum = 0, rsum = 0;
    for (const FrameError& f : rep.frames) {
        terrs.push_back(f.terr_m);
        rerrs.push_back(f.rerr_deg);
        tsum += f.terr_m;
        rsum += f.rerr_deg;
    }
    CHECK(rep.mean_terr == tsum / static_cast<double>(rep.frame_count));
    CHECK(rep.mean_rerr == rsum / static_cast<double>(rep.frame_count));
    CHECK(rep.median_terr == median_of(terrs));
    CHECK(rep.median_rerr == median_of(rerrs));

    SUBCASE("deterministic given checkpoint, manifest, and seed") {
        const EvalResult again =
            evaluate(fx.cfg, fx.params, fx.manifest, Split::kTrain, Aggregate::kMedian, 999);
        CHECK(again.report.mean_terr == rep.mean_terr);
        CHECK(again.report.median_rerr == rep.median_rerr);
    }
    SUBCASE("empty split rejected") {
        DatasetManifest empty = fx.manifest;
        for (ManifestRecord& r : empty.records) r.split = Split::kTrain;
        CHECK_THROWS_AS(
            evaluate(fx.cfg, fx.params, empty, Split::kVal, Aggregate::kMean, 999), DataError);
    }
}

TEST_CASE("ground truth fed as predictions scores zero everywhere") {
    EvalFixture fx;
    // Evaluate, then recompute errors of ground truth against itself.
    const EvalResult result =
        evaluate(fx.cfg, fx.params, fx.manifest, Split::kTrain, Aggregate::kMean, 999);
    for (const Pose& gt : result.ground_truth) {
        CHECK(translation_error_m(gt.t, gt.t) == 0.0);
        CHECK(rotation_error_deg(gt.q, gt.q) == 0.0);
    }
    // mean == median == 0 on an all-zero error list.
    const std::vector<double> zeros(result.ground_truth.size(), 0.0);
    CHECK(median_of(zeros) == 0.0);
}

TEST_CASE("trajectory export round trips") {
    EvalFixture fx;
    const EvalResult result =
        evaluate(fx.cfg, fx.params, fx.manifest, Split::kTrain, Aggregate::kMean, 999);
    const std::string path = fx.dir + "/trajectory.txt";
    export_trajectory(result.report, result.predictions, result.ground_truth, path);

    std::ifstream is(path);
    REQUIRE(is.good());
    std::string line;
    std::size_t lines = 0;
    bool header_seen = false;
    double worst = 0.0;
    while (std::getline(is, line)) {
        ++lines;
        if (line.rfind('#', 0) == 0) {
            header_seen = true;
            continue;
        }
        std::istringstream ss(line);
        std::size_t index;
        double g[7], p[7], terr, rerr;
        ss >> index;
        for (double& v : g) ss >> v;
        for (double& v : p) ss >> v;
        ss >> terr >> rerr;
        REQUIRE(!ss.fail());

        const Vec3 gt{g[0], g[1], g[2]};
        const Vec3 pt{p[0], p[1], p[2]};
        const Quat gq{g[3], g[4], g[5], g[6]};
        const Quat pq{p[3], p[4], p[5], p[6]};
        worst = std::max(worst, std::fabs(translation_error_m(gt, pt) - terr));
        worst = std::max(worst, std::fabs(rotation_error_deg(gq, pq) - rerr));
    }
    CHECK(header_seen);
    CHECK(lines == result.report.frame_count + 1);
    CHECK(worst < 1e-9);

    SUBCASE("empty prediction list rejected") {
        CHECK_THROWS_AS(export_trajectory(result.report, {}, {}, fx.dir + "/empty.txt"),
                        DataError);
    }
}

TEST_CASE("report file carries both aggregates") {
    EvalFixture fx;
    const EvalResult result =
        evaluate(fx.cfg, fx.params, fx.manifest, Split::kTrain, Aggregate::kMedian, 999);
    const std::string path = fx.dir + "/report.txt";
    write_report(path, result.report);

    std::ifstream is(path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(text.find("split: train") != std::string::npos);
    CHECK(text.find("aggregate: median") != std::string::npos);
    CHECK(text.find("mean_translation_error_m:") != std::string::npos);
    CHECK(text.find("median_rotation_error_deg:") != std::string::npos);
}
