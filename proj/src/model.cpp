#include "pointloc/model.hpp"

#include <algorithm>
#include <cmath>

namespace pointloc {

namespace {

std::size_t shrink(std::size_t full, std::size_t divisor) {
    return std::max<std::size_t>(1, full / divisor);
}

}  // namespace

ModelConfig ModelConfig::from_scale(const ModelScale& s) {
    if (s.point_divisor == 0 || s.width_divisor == 0 || s.sample_divisor == 0)
        throw DataError("ModelScale: divisors must be positive");
    const auto p = [&](std::size_t n) { return shrink(n, s.point_divisor); };
    const auto w = [&](std::size_t n) { return shrink(n, s.width_divisor); };
    const auto k = [&](std::size_t n) { return shrink(n, s.sample_divisor); };
    const double r = s.radius_scale;

    ModelConfig cfg;
    cfg.sa[0] = {p(2048), 0.2 * r, k(64), {0, w(64), w(64), w(128)}};
    cfg.sa[1] = {p(1024), 0.4 * r, k(32), {w(128), w(128), w(128), w(256)}};
    cfg.sa[2] = {p(512), 0.8 * r, k(16), {w(256), w(128), w(128), w(256)}};
    cfg.sa[3] = {p(256), 1.2 * r, k(16), {w(256), w(128), w(128), w(256)}};
    cfg.attn_channels = w(256);
    cfg.ga_mlp = {w(256), w(256), w(512), w(1024)};
    cfg.ga_fc_out = w(1024);
    cfg.regressor_dims = {w(1024), w(512), w(128), w(64), 3};
    cfg.input_points = s.input_points;

    if (cfg.input_points < cfg.sa[0].n_points)
        throw DataError("ModelScale: input_points " + std::to_string(cfg.input_points) +
                        " below first-layer center count " + std::to_string(cfg.sa[0].n_points));
    for (std::size_t i = 1; i < 4; ++i) {
        if (cfg.sa[i].n_points >= cfg.sa[i - 1].n_points)
            throw DataError("ModelScale: layer point counts must strictly decrease");
        if (cfg.sa[i].mlp_channels.front() != cfg.sa[i - 1].mlp_channels.back())
            throw DataError("ModelConfig: MLP chains are not channel-compatible");
    }
    return cfg;
}

void ModelParams::add(std::string name, Tensor t) {
    if (index_.count(name))
        throw DataError("ModelParams: tensor '" + name + "' registered twice");
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
}

Tensor& ModelParams::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw DataError("ModelParams: unknown tensor '" + name + "'");
    return tensors_[it->second];
}

const Tensor& ModelParams::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw DataError("ModelParams: unknown tensor '" + name + "'");
    return tensors_[it->second];
}

std::size_t ModelParams::total_scalars() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) n += t.size();
    return n;
}

namespace {

void add_linear(ModelParams& params, Rng& rng, const std::string& prefix, std::size_t fan_in,
                std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    w.requires_grad = true;
    Tensor b = Tensor::zeros({fan_out});
    b.requires_grad = true;
    params.add(prefix + "/weight", std::move(w));
    params.add(prefix + "/bias", std::move(b));
}

void add_mlp(ModelParams& params, Rng& rng, const std::string& prefix,
             const std::vector<std::size_t>& dims) {
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        add_linear(params, rng, prefix + "/lin" + std::to_string(l), dims[l], dims[l + 1]);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams params;
    Rng rng(seed);

    for (std::size_t i = 0; i < 4; ++i) {
        const SALayerConfig& sa = cfg.sa[i];
        std::vector<std::size_t> dims = sa.mlp_channels;
        dims[0] += 3;  // center-relative offsets enter the first linear
        add_mlp(params, rng, "sa" + std::to_string(i + 1), dims);
    }
    add_linear(params, rng, "attn/lin", cfg.attn_channels, cfg.attn_channels);
    add_mlp(params, rng, "ga", cfg.ga_mlp);
    add_linear(params, rng, "ga/fc", cfg.ga_mlp.back(), cfg.ga_fc_out);
    add_mlp(params, rng, "reg_t", cfg.regressor_dims);
    add_mlp(params, rng, "reg_q", cfg.regressor_dims);

    Tensor beta = Tensor::scalar(0.0);
    beta.requires_grad = true;
    Tensor gamma = Tensor::scalar(-3.0);
    gamma.requires_grad = true;
    params.add("loss/beta", std::move(beta));
    params.add("loss/gamma", std::move(gamma));
    return params;
}

SamplePlan build_plan(const ModelConfig& cfg, const PointCloud& cloud) {
    if (cloud.size() != cfg.input_points)
        throw ShapeError("build_plan: cloud has " + std::to_string(cloud.size()) +
                         " points, expected " + std::to_string(cfg.input_points) +
                         " (resample first)");

    SamplePlan plan;
    const std::vector<Vec3>* src = &cloud.points;
    for (std::size_t i = 0; i < 4; ++i) {
        SamplePlan::Layer& layer = plan.layers[i];
        const SALayerConfig& sa = cfg.sa[i];
        const std::vector<std::size_t> picks = farthest_point_sample(*src, sa.n_points);
        layer.centers.reserve(picks.size());
        for (std::size_t idx : picks) layer.centers.push_back((*src)[idx]);
        NeighborIndex nbr = ball_query(*src, layer.centers, sa.radius, sa.sample_num);
        layer.m = layer.centers.size();
        layer.k = sa.sample_num;
        layer.offsets = group_relative(*src, nullptr, 0, nbr);
        layer.gather = std::move(nbr.indices);
        layer.valid_counts = std::move(nbr.valid_counts);
        src = &layer.centers;
    }
    return plan;
}

ValueId TapeBinding::id_of(const std::string& name) const {
    if (!params) throw DataError("TapeBinding: unbound");
    for (std::size_t i = 0; i < params->count(); ++i)
        if (params->name(i) == name) return ids[i];
    throw DataError("TapeBinding: unknown tensor '" + name + "'");
}

TapeBinding bind_params(Tape& tape, const ModelParams& params, bool requires_grad) {
    TapeBinding bind;
    bind.params = &params;
    bind.ids.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor t = params.tensor(i);
        t.requires_grad = requires_grad;
        t.grad.clear();
        bind.ids.push_back(tape.leaf(std::move(t)));
    }
    return bind;
}

namespace {

/// lin -> LeakyReLU chain; the final linear is also activated when
/// activate_last is set (SA and GA MLPs), and left bare otherwise.
ValueId run_mlp(Tape& tape, const TapeBinding& bind, const std::string& prefix, std::size_t layers,
                ValueId h, double slope, bool activate_last) {
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string lin = prefix + "/lin" + std::to_string(l);
        h = tape.pointwise_linear(h, bind.id_of(lin + "/weight"), bind.id_of(lin + "/bias"));
        if (activate_last || l + 1 < layers) h = tape.leaky_relu(h, slope);
    }
    return h;
}

}  // namespace

ValueId sa_layer_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                         std::size_t layer, const SamplePlan::Layer& plan,
                         std::optional<ValueId> in_features) {
    const SALayerConfig& sa = cfg.sa[layer];
    const std::size_t c_in = sa.mlp_channels.front();
    if ((c_in == 0) != !in_features.has_value())
        throw ShapeError("sa_layer_forward: layer " + std::to_string(layer + 1) +
                         (c_in == 0 ? " takes raw coordinates only" : " requires input features"));

    Tensor offsets({plan.m, plan.k, 3}, plan.offsets);
    ValueId grouped = tape.leaf(std::move(offsets));
    if (in_features) {
        const Tensor& feats = tape.value(*in_features);
        if (feats.cols() != c_in)
            throw ShapeError("sa_layer_forward: features " + Tensor::shape_str(feats.shape) +
                             " incompatible with expected " + std::to_string(c_in) + " channels");
        grouped = tape.concat_cols(grouped, tape.gather_rows(*in_features, plan.gather));
    }

    const ValueId lifted =
        run_mlp(tape, bind, "sa" + std::to_string(layer + 1), sa.mlp_channels.size() - 1, grouped,
                cfg.leaky_slope, /*activate_last=*/true);
    return tape.grouped_max_pool(lifted, plan.valid_counts);
}

ValueId self_attention_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                               ValueId features, AttentionMode mode, ValueId* mask_out) {
    if (mode == AttentionMode::kOff) {
        if (mask_out) *mask_out = features;  // no mask exists in this mode
        return features;
    }
    const Tensor& f = tape.value(features);
    const std::size_t c = f.cols();
    if (c != cfg.attn_channels)
        throw ShapeError("self_attention_forward: features " + Tensor::shape_str(f.shape) +
                         " do not match attention width " + std::to_string(cfg.attn_channels));
    const std::size_t m = f.rows();

    ValueId mask;
    if (mode == AttentionMode::kAllOnes) {
        mask = tape.leaf(Tensor({1, c}, std::vector<double>(c, 1.0)));
    } else {
        // Channelwise max over all rows summarizes F into {1, C}.
        const ValueId pooled =
            tape.grouped_max_pool(tape.reshape(features, {1, m, c}), {m});
        const ValueId pre =
            tape.pointwise_linear(pooled, bind.id_of("attn/lin/weight"), bind.id_of("attn/lin/bias"));
        mask = tape.sigmoid(pre);
    }
    if (mask_out) *mask_out = mask;
    return tape.broadcast_mul_row(features, mask);
}

ValueId group_all_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                          ValueId features) {
    const Tensor& f = tape.value(features);
    if (f.cols() != cfg.ga_mlp.front())
        throw ShapeError("group_all_forward: features " + Tensor::shape_str(f.shape) +
                         " do not match MLP input width " + std::to_string(cfg.ga_mlp.front()));
    const ValueId lifted = run_mlp(tape, bind, "ga", cfg.ga_mlp.size() - 1, features,
                                   cfg.leaky_slope, /*activate_last=*/true);
    const std::size_t m = tape.value(lifted).rows();
    const std::size_t c = tape.value(lifted).cols();
    const ValueId pooled = tape.grouped_max_pool(tape.reshape(lifted, {1, m, c}), {m});
    return tape.pointwise_linear(pooled, bind.id_of("ga/fc/weight"), bind.id_of("ga/fc/bias"));
}

PoseOutput regressor_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                             ValueId embedding) {
    const Tensor& e = tape.value(embedding);
    if (e.cols() != cfg.regressor_dims.front() || e.rows() != 1)
        throw ShapeError("regressor_forward: embedding " + Tensor::shape_str(e.shape) +
                         " does not match input width " + std::to_string(cfg.regressor_dims.front()));
    const std::size_t layers = cfg.regressor_dims.size() - 1;
    PoseOutput out;
    out.t = run_mlp(tape, bind, "reg_t", layers, embedding, cfg.leaky_slope, /*activate_last=*/false);
    out.w = run_mlp(tape, bind, "reg_q", layers, embedding, cfg.leaky_slope, /*activate_last=*/false);
    return out;
}

PoseOutput pointloc_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                            const SamplePlan& plan, AttentionMode mode) {
    std::optional<ValueId> feats;
    for (std::size_t i = 0; i < 4; ++i)
        feats = sa_layer_forward(tape, bind, cfg, i, plan.layers[i], feats);
    ValueId h = self_attention_forward(tape, bind, cfg, *feats, mode);
    h = group_all_forward(tape, bind, cfg, h);
    return regressor_forward(tape, bind, cfg, h);
}

LogPose predict(const ModelConfig& cfg, const ModelParams& params, const PointCloud& cloud,
                AttentionMode mode) {
    Tape tape;
    const TapeBinding bind = bind_params(tape, params, /*requires_grad=*/false);
    const SamplePlan plan = build_plan(cfg, cloud);
    const PoseOutput out = pointloc_forward(tape, bind, cfg, plan, mode);
    const Tensor& t = tape.value(out.t);
    const Tensor& w = tape.value(out.w);
    return {{t.data[0], t.data[1], t.data[2]}, {w.data[0], w.data[1], w.data[2]}};
}

}  // namespace pointloc
