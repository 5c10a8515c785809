#ifndef POINTLOC_OPTIM_HPP_
#define POINTLOC_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pointloc/checkpoint.hpp"
#include "pointloc/data.hpp"
#include "pointloc/model.hpp"

namespace pointloc {

/// Bias-corrected Adam moments, one pair of arrays per parameter tensor.
struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;

    static AdamState init(const ModelParams& params, double lr);
};

/// theta -= lr * m_hat / (sqrt(v_hat) + eps_hat); step advances by one.
/// grads must align with the registration order and cover every parameter.
void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

struct TrainConfig {
    std::size_t epochs = 100;
    double lr = 0.001;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
    std::size_t max_steps = 0;         // optimizer steps; 0 = no cap
    AttentionMode attention = AttentionMode::kLearned;
    std::string out_dir;               // periodic checkpoints (when scheduled)
    std::string checkpoint_path;       // final checkpoint (empty = skip)
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t steps = 0;
};

/// Seeded-shuffle mini-batch training: forward, pose loss, backward, and one
/// Adam step per batch. Per-sample gradients are summed in sample order, so
/// results are bit-reproducible. Sampling plans are cached per sample.
/// Checkpoints carry optimizer state, so runs resume exactly.
TrainResult train(const ModelConfig& cfg, const TrainConfig& tc,
                  const std::vector<TrainSample>& samples, ModelParams& params, AdamState& state,
                  std::size_t start_epoch = 0);

/// One tab-separated line per epoch: epoch, mean train loss, beta, gamma,
/// wall-clock seconds.
void write_loss_log(const std::string& path, const std::vector<EpochLog>& log);

/// Optimizer state (and the epoch to resume from) as checkpoint records.
std::vector<NamedTensor> adam_records(const AdamState& state, const ModelParams& params,
                                      std::size_t next_epoch);

/// Restores state from records produced by adam_records; returns next_epoch.
std::size_t restore_adam(const std::vector<NamedTensor>& records, const ModelParams& params,
                         AdamState& state);

}  // namespace pointloc

#endif  // POINTLOC_OPTIM_HPP_
