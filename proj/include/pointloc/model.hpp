#ifndef POINTLOC_MODEL_HPP_
#define POINTLOC_MODEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pointloc/sampling.hpp"
#include "pointloc/tape.hpp"

namespace pointloc {

/// One set-abstraction layer: FPS center count, ball-query radius and budget,
/// and the shared MLP widths. mlp_channels[0] is the incoming feature width
/// (0 for the raw-coordinate first layer); the first linear consumes 3 more
/// channels for the center-relative offsets.
struct SALayerConfig {
    std::size_t n_points = 0;
    double radius = 0.0;
    std::size_t sample_num = 0;
    std::vector<std::size_t> mlp_channels;
};

/// Proportional shrink knobs for desk-scale runs. Divisors apply to the
/// full-size center counts, channel widths, and neighbor budgets; the radius
/// multiplier compensates for the sparser clouds.
struct ModelScale {
    std::size_t input_points = 20480;
    std::size_t point_divisor = 1;
    std::size_t width_divisor = 1;
    std::size_t sample_divisor = 1;
    double radius_scale = 1.0;

    static ModelScale full() { return {}; }
    static ModelScale tiny() { return {256, 32, 8, 4, 4.0}; }
};

enum class AttentionMode {
    kLearned,  // mask from the attention MLP
    kAllOnes,  // mask forced to ones (ablation parity check)
    kOff,      // module skipped entirely
};

/// Resolved architecture. The full() scale reproduces the reference widths:
/// SA chain (2048,128)->(1024,256)->(512,256)->(256,256), attention over 256
/// channels, group-all MLP to 1024 with an FC head, and twin 1024-512-128-64-3
/// regressor branches with LeakyReLU(0.2) between layers.
struct ModelConfig {
    std::array<SALayerConfig, 4> sa;
    std::size_t attn_channels = 0;
    std::vector<std::size_t> ga_mlp;       // {in, hidden..., out}
    std::size_t ga_fc_out = 0;
    std::vector<std::size_t> regressor_dims;  // {in, hidden..., 3}
    double leaky_slope = 0.2;
    std::size_t input_points = 0;

    static ModelConfig from_scale(const ModelScale& scale);
};

/// Every learnable tensor of the network plus the loss factors beta and
/// gamma, in a fixed registration order keyed by slash-separated names.
class ModelParams {
public:
    void add(std::string name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::size_t count() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

    std::size_t total_scalars() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic initialization: weights uniform in +-1/sqrt(fan_in), biases
/// zero, beta = 0.0 and gamma = -3.0.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Parameter-independent per-cloud geometry: FPS centers, neighbor gather
/// rows, valid counts, and center-relative offsets for each SA layer.
/// Reusable across training steps on the same cloud.
struct SamplePlan {
    struct Layer {
        std::vector<Vec3> centers;
        std::vector<std::size_t> gather;
        std::vector<std::size_t> valid_counts;
        std::vector<double> offsets;  // {M, K, 3} flat
        std::size_t m = 0;
        std::size_t k = 0;
    };
    std::array<Layer, 4> layers;
};

SamplePlan build_plan(const ModelConfig& cfg, const PointCloud& cloud);

/// Parameter leaves registered on one tape, parallel to ModelParams order.
struct TapeBinding {
    std::vector<ValueId> ids;
    const ModelParams* params = nullptr;

    ValueId id_of(const std::string& name) const;
};

TapeBinding bind_params(Tape& tape, const ModelParams& params, bool requires_grad);

struct PoseOutput {
    ValueId t = 0;  // {1, 3}
    ValueId w = 0;  // {1, 3}
};

/// Shared MLP over each neighborhood row, then columnwise max per region.
ValueId sa_layer_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                         std::size_t layer, const SamplePlan::Layer& plan,
                         std::optional<ValueId> in_features);

/// Per-channel gate in (0,1) from a pooled summary, broadcast over rows.
/// mask_out (optional) receives the mask value id in kLearned/kAllOnes modes.
ValueId self_attention_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                               ValueId features, AttentionMode mode, ValueId* mask_out = nullptr);

/// Pointwise MLP, max pool over all rows, then the FC head; {1, ga_fc_out}.
ValueId group_all_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                          ValueId features);

/// Twin FC stacks with disjoint parameters emitting t and log q.
PoseOutput regressor_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                             ValueId embedding);

/// Full composition over a prebuilt plan.
PoseOutput pointloc_forward(Tape& tape, const TapeBinding& bind, const ModelConfig& cfg,
                            const SamplePlan& plan, AttentionMode mode);

/// Convenience: plan + forward on a fresh binding, no gradients.
LogPose predict(const ModelConfig& cfg, const ModelParams& params, const PointCloud& cloud,
                AttentionMode mode = AttentionMode::kLearned);

}  // namespace pointloc

#endif  // POINTLOC_MODEL_HPP_
