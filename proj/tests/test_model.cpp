#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "pointloc/checkpoint.hpp"
#include "pointloc/gradcheck.hpp"
#include "pointloc/loss.hpp"
#include "pointloc/model.hpp"

using namespace pointloc;

namespace {

PointCloud random_cloud(Rng& rng, std::size_t n, double extent = 2.0) {
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                            rng.uniform(-extent, extent)});
    return c;
}

// Closed-form parameter count for one linear chain: sum of in*out + out.
std::size_t chain_params(const std::vector<std::size_t>& dims) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += dims[i] * dims[i + 1] + dims[i + 1];
    return n;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("init_params is deterministic and sets the loss factors") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams a = init_params(cfg, 42);
    const ModelParams b = init_params(cfg, 42);
    REQUIRE(a.count() == b.count());
    for (std::size_t i = 0; i < a.count(); ++i) {
        CHECK(a.name(i) == b.name(i));
        CHECK(std::memcmp(a.tensor(i).data.data(), b.tensor(i).data.data(),
                          a.tensor(i).size() * sizeof(double)) == 0);
    }
    CHECK(a.at("loss/beta").item() == 0.0);
    CHECK(a.at("loss/gamma").item() == -3.0);

    const ModelParams c = init_params(cfg, 43);
    CHECK(std::memcmp(a.tensor(0).data.data(), c.tensor(0).data.data(),
                      a.tensor(0).size() * sizeof(double)) != 0);
}

TEST_CASE("full-scale parameter count matches the closed form") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::full());
    const ModelParams params = init_params(cfg, 0);

    std::size_t expected = 0;
    expected += chain_params({3, 64, 64, 128});        // SA1 (offsets only)
    expected += chain_params({128 + 3, 128, 128, 256});  // SA2
    expected += chain_params({256 + 3, 128, 128, 256});  // SA3
    expected += chain_params({256 + 3, 128, 128, 256});  // SA4
    expected += chain_params({256, 256});              // attention
    expected += chain_params({256, 256, 512, 1024});   // group-all MLP
    expected += chain_params({1024, 1024});            // group-all FC
    expected += 2 * chain_params({1024, 512, 128, 64, 3});  // both regressor branches
    expected += 2;                                     // beta, gamma
    CHECK(params.total_scalars() == expected);
    CHECK(expected == 3280712u);  // frozen regression constant
}

TEST_CASE("sa layer shapes follow the scaled config") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 1);
    Rng rng(5);
    const PointCloud cloud = random_cloud(rng, cfg.input_points);
    const SamplePlan plan = build_plan(cfg, cloud);

    Tape tape;
    const TapeBinding bind = bind_params(tape, params, false);
    std::optional<ValueId> feats;
    for (std::size_t i = 0; i < 4; ++i) {
        feats = sa_layer_forward(tape, bind, cfg, i, plan.layers[i], feats);
        const Tensor& f = tape.value(*feats);
        CHECK(f.shape == std::vector<std::size_t>{cfg.sa[i].n_points, cfg.sa[i].mlp_channels.back()});
        CHECK(plan.layers[i].centers.size() == cfg.sa[i].n_points);
    }

    const ValueId attended = self_attention_forward(tape, bind, cfg, *feats, AttentionMode::kLearned);
    CHECK(tape.value(attended).shape == tape.value(*feats).shape);

    const ValueId embed = group_all_forward(tape, bind, cfg, attended);
    CHECK(tape.value(embed).shape == std::vector<std::size_t>{1, cfg.ga_fc_out});

    const PoseOutput out = regressor_forward(tape, bind, cfg, embed);
    CHECK(tape.value(out.t).shape == std::vector<std::size_t>{1, 3});
    CHECK(tape.value(out.w).shape == std::vector<std::size_t>{1, 3});
}

TEST_CASE("attention mask saturates to the identity at +40 pre-sigmoid") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    ModelParams params = init_params(cfg, 2);
    // Zero weights, +40 bias: the mask is sigmoid(40) in every channel.
    for (double& v : params.at("attn/lin/weight").data) v = 0.0;
    for (double& v : params.at("attn/lin/bias").data) v = 40.0;

    Rng rng(6);
    std::vector<double> feats_data(cfg.sa[3].n_points * cfg.attn_channels);
    for (double& v : feats_data) v = rng.uniform(-3, 3);

    Tape tape;
    const TapeBinding bind = bind_params(tape, params, false);
    const ValueId feats = tape.leaf(Tensor({cfg.sa[3].n_points, cfg.attn_channels}, feats_data));
    ValueId mask = 0;
    const ValueId out = self_attention_forward(tape, bind, cfg, feats, AttentionMode::kLearned, &mask);

    for (double m : tape.value(mask).data) {
        CHECK(m > 0.0);
        CHECK(m < 1.0);
    }
    for (std::size_t i = 0; i < feats_data.size(); ++i)
        CHECK(std::fabs(tape.value(out).data[i] - feats_data[i]) < 1e-12);
}

TEST_CASE("attention mask near zero gates the channel off") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    ModelParams params = init_params(cfg, 2);
    for (double& v : params.at("attn/lin/weight").data) v = 0.0;
    std::vector<double>& bias = params.at("attn/lin/bias").data;
    for (double& v : bias) v = 40.0;
    bias[0] = -40.0;  // first channel forced to ~0

    Rng rng(7);
    const std::size_t m = cfg.sa[3].n_points, c = cfg.attn_channels;
    std::vector<double> feats_data(m * c);
    for (double& v : feats_data) v = rng.uniform(-3, 3);

    Tape tape;
    const TapeBinding bind = bind_params(tape, params, false);
    const ValueId feats = tape.leaf(Tensor({m, c}, feats_data));
    const ValueId out = self_attention_forward(tape, bind, cfg, feats, AttentionMode::kLearned);
    for (std::size_t r = 0; r < m; ++r) CHECK(std::fabs(tape.value(out).data[r * c]) < 1e-10);
}

TEST_CASE("all-ones attention equals the attention-free pass bitwise") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 3);
    Rng rng(8);
    const PointCloud cloud = random_cloud(rng, cfg.input_points);
    const LogPose ones = predict(cfg, params, cloud, AttentionMode::kAllOnes);
    const LogPose off = predict(cfg, params, cloud, AttentionMode::kOff);
    CHECK(std::memcmp(&ones, &off, sizeof(LogPose)) == 0);
}

TEST_CASE("group_all pooling ignores duplicated rows and routes sparsely") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 4);
    Rng rng(9);
    const std::size_t m = cfg.sa[3].n_points;
    const std::size_t c = cfg.ga_mlp.front();
    std::vector<double> feats(m * c);
    for (double& v : feats) v = rng.uniform(-1, 1);

    Tape tape;
    const TapeBinding bind = bind_params(tape, params, false);
    const ValueId base = group_all_forward(tape, bind, cfg, tape.leaf(Tensor({m, c}, feats)));

    std::vector<double> doubled(2 * m * c);
    std::copy(feats.begin(), feats.end(), doubled.begin());
    std::copy(feats.begin(), feats.end(), doubled.begin() + static_cast<std::ptrdiff_t>(m * c));
    const ValueId dup = group_all_forward(tape, bind, cfg, tape.leaf(Tensor({2 * m, c}, doubled)));
    CHECK(tape.value(base).data == tape.value(dup).data);

    // Backward from the embedding reaches at most one row per pooled channel.
    Tape t2;
    const TapeBinding b2 = bind_params(t2, params, false);
    Tensor in({m, c}, feats);
    in.requires_grad = true;
    const ValueId leaf = t2.leaf(std::move(in));
    t2.backward(t2.sum(group_all_forward(t2, b2, cfg, leaf)));
    const std::vector<double>& g = t2.grad(leaf);
    std::size_t rows_touched = 0;
    for (std::size_t r = 0; r < m; ++r) {
        bool touched = false;
        for (std::size_t ch = 0; ch < c; ++ch) touched |= g[r * c + ch] != 0.0;
        rows_touched += touched;
    }
    CHECK(rows_touched <= cfg.ga_mlp.back());
}

TEST_CASE("regressor emits six numbers from disjoint branches") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    ModelParams params = init_params(cfg, 5);

    Tape tape;
    const TapeBinding bind = bind_params(tape, params, false);
    std::vector<double> embed_data(cfg.ga_fc_out);
    Rng rng(10);
    for (double& v : embed_data) v = rng.uniform(-1, 1);
    const ValueId embed = tape.leaf(Tensor({1, cfg.ga_fc_out}, embed_data));
    const PoseOutput out = regressor_forward(tape, bind, cfg, embed);
    CHECK(tape.value(out.t).size() + tape.value(out.w).size() == 6);

    SUBCASE("zero embedding with zero biases predicts the identity pose") {
        Tape t2;
        const TapeBinding b2 = bind_params(t2, params, false);
        const ValueId zero = t2.leaf(Tensor::zeros({1, cfg.ga_fc_out}));
        const PoseOutput o2 = regressor_forward(t2, b2, cfg, zero);
        CHECK(t2.value(o2.t).data == std::vector<double>{0, 0, 0});
        CHECK(t2.value(o2.w).data == std::vector<double>{0, 0, 0});
    }
    SUBCASE("perturbing the t branch leaves w untouched") {
        const Tensor w_before = tape.value(out.w);
        for (double& v : params.at("reg_t/lin1/weight").data) v += 0.25;
        Tape t2;
        const TapeBinding b2 = bind_params(t2, params, false);
        const PoseOutput o2 = regressor_forward(t2, b2, cfg, t2.leaf(Tensor({1, cfg.ga_fc_out}, embed_data)));
        CHECK(t2.value(o2.w).data == w_before.data);
        CHECK(t2.value(o2.t).data != tape.value(out.t).data);
    }
}

TEST_CASE("pointloc_forward is finite, pure, and scene-discriminating") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 11);
    Rng rng(12);
    const PointCloud cloud = random_cloud(rng, cfg.input_points);

    const LogPose a = predict(cfg, params, cloud);
    CHECK(std::isfinite(a.t.x));
    CHECK(std::isfinite(a.w.z));
    const LogPose b = predict(cfg, params, cloud);
    CHECK(std::memcmp(&a, &b, sizeof(LogPose)) == 0);  // purity

    const PointCloud other = random_cloud(rng, cfg.input_points);
    const LogPose c = predict(cfg, params, other);
    const double delta = std::fabs(a.t.x - c.t.x) + std::fabs(a.t.y - c.t.y) +
                         std::fabs(a.t.z - c.t.z) + std::fabs(a.w.x - c.w.x) +
                         std::fabs(a.w.y - c.w.y) + std::fabs(a.w.z - c.w.z);
    CHECK(delta > 1e-9);  // two scenes, two outputs
}

TEST_CASE("pointloc_forward is invariant to input permutation") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 13);
    Rng rng(14);
    const PointCloud cloud = random_cloud(rng, cfg.input_points);
    const LogPose base = predict(cfg, params, cloud);

    PointCloud shuffled = cloud;
    rng.shuffle(shuffled.points);
    const LogPose perm = predict(cfg, params, shuffled);
    CHECK(std::fabs(base.t.x - perm.t.x) < 1e-6);
    CHECK(std::fabs(base.t.y - perm.t.y) < 1e-6);
    CHECK(std::fabs(base.t.z - perm.t.z) < 1e-6);
    CHECK(std::fabs(base.w.x - perm.w.x) < 1e-6);
    CHECK(std::fabs(base.w.y - perm.w.y) < 1e-6);
    CHECK(std::fabs(base.w.z - perm.w.z) < 1e-6);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    const ModelParams params = init_params(cfg, 15);
    const std::string path = temp_path("ploc_test_roundtrip.ploc");
    save_params(path, params);

    ModelParams reloaded = init_params(cfg, 16);  // different values, same layout
    const std::vector<NamedTensor> rest = load_params(path, reloaded);
    CHECK(rest.empty());
    for (std::size_t i = 0; i < params.count(); ++i)
        CHECK(std::memcmp(params.tensor(i).data.data(), reloaded.tensor(i).data.data(),
                          params.tensor(i).size() * sizeof(double)) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects foreign files") {
    const std::string path = temp_path("ploc_test_badmagic.ploc");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f);
    std::fputs("JUNKJUNKJUNK", f);
    std::fclose(f);
    CHECK_THROWS_AS(read_records(path), DataError);
    std::filesystem::remove(path);
}

// Finite-difference pass over the whole scaled-down network, sampling a few
// coordinates per tensor. Loss includes both factor terms, so beta and gamma
// are exercised too. Parameters are nudged off the init point first: zero
// biases put the self-offset rows exactly on the LeakyReLU kink, where a
// central difference straddles two slopes.
TEST_CASE("full network gradients match finite differences") {
    const ModelConfig cfg = ModelConfig::from_scale(ModelScale::tiny());
    ModelParams params = init_params(cfg, 17);
    Rng rng(18);
    for (std::size_t i = 0; i < params.count(); ++i)
        for (double& v : params.tensor(i).data) v += rng.uniform(-0.05, 0.05);
    const PointCloud cloud = random_cloud(rng, cfg.input_points);
    const SamplePlan plan = build_plan(cfg, cloud);
    const LogPose target{{0.4, -0.2, 0.7}, {0.1, -0.3, 0.2}};

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.count(); ++pi) {
        const std::string pname = params.name(pi);
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
        opt.eps = 1e-6;
        opt.max_coords = 6;
        opt.coord_seed = 1000 + pi;
        worst = std::max(worst, finite_diff_check(f, params.tensor(pi), opt));
    }
    CHECK(worst < 1e-4);
}
