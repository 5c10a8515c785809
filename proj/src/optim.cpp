#include "pointloc/optim.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pointloc/loss.hpp"

namespace pointloc {

AdamState AdamState::init(const ModelParams& params, double lr_in) {
    AdamState s;
    s.lr = lr_in;
    s.m.resize(params.count());
    s.v.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        s.m[i].assign(params.tensor(i).size(), 0.0);
        s.v[i].assign(params.tensor(i).size(), 0.0);
    }
    return s;
}

void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
    if (grads.size() != params.count())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.count()) + " parameters");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor& t = params.tensor(i);
        const std::vector<double>& g = grads[i];
        if (g.size() != t.size())
            throw ShapeError("adam_step: missing or misshapen gradient for '" + params.name(i) +
                             "'");
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < g.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            t.data[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
        }
    }
}

TrainResult train(const ModelConfig& cfg, const TrainConfig& tc,
                  const std::vector<TrainSample>& samples, ModelParams& params, AdamState& state,
                  std::size_t start_epoch) {
    if (samples.empty()) throw DataError("train: empty training set");

    // Geometry per sample is parameter-independent; build it once.
    std::vector<SamplePlan> plans;
    plans.reserve(samples.size());
    for (const TrainSample& s : samples) plans.push_back(build_plan(cfg, s.cloud));

    TrainResult result;
    std::vector<std::vector<double>> grads(params.count());

    bool stop = false;
    for (std::size_t epoch = start_epoch; epoch < tc.epochs && !stop; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng(mix_seed(tc.seed, epoch)).shuffle(order);

        double epoch_loss_sum = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t begin = 0; begin < order.size() && !stop; begin += tc.batch_size) {
            const std::size_t end = std::min(order.size(), begin + tc.batch_size);
            const std::size_t batch = end - begin;
            for (std::size_t i = 0; i < params.count(); ++i)
                grads[i].assign(params.tensor(i).size(), 0.0);

            double batch_loss_sum = 0.0;
            for (std::size_t pos = begin; pos < end; ++pos) {
                const std::size_t s = order[pos];
                try {
                    Tape tape;
                    const TapeBinding bind = bind_params(tape, params, /*requires_grad=*/true);
                    const PoseOutput pred = pointloc_forward(tape, bind, cfg, plans[s], tc.attention);
                    const ValueId loss = pose_loss(tape, pred, samples[s].target,
                                                   bind.id_of("loss/beta"), bind.id_of("loss/gamma"));
                    batch_loss_sum += tape.value(loss).item();
                    tape.backward(loss);
                    for (std::size_t i = 0; i < params.count(); ++i) {
                        const std::vector<double>& g = tape.grad(bind.ids[i]);
                        for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
                    }
                } catch (const NumericError& e) {
                    throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                                       std::to_string(begin / tc.batch_size) + " frame '" +
                                       samples[s].frame + "': " + e.what());
                }
            }
            const double inv = 1.0 / static_cast<double>(batch);
            for (std::size_t i = 0; i < params.count(); ++i)
                for (double& g : grads[i]) g *= inv;
            const double batch_loss = batch_loss_sum * inv;
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(begin / tc.batch_size));

            adam_step(params, grads, state);
            epoch_loss_sum += batch_loss_sum;
            epoch_count += batch;
            result.steps += 1;
            if (tc.max_steps > 0 && result.steps >= tc.max_steps) stop = true;
        }

        const auto t1 = std::chrono::steady_clock::now();
        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_loss = epoch_loss_sum / static_cast<double>(epoch_count);
        entry.beta = params.at("loss/beta").item();
        entry.gamma = params.at("loss/gamma").item();
        entry.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(entry);

        if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 &&
            !tc.out_dir.empty()) {
            const std::string path =
                (std::filesystem::path(tc.out_dir) / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".ploc"))
                    .string();
            save_params(path, params, adam_records(state, params, epoch + 1));
        }
    }

    if (!tc.checkpoint_path.empty()) {
        const std::size_t next_epoch = result.log.empty() ? start_epoch : result.log.back().epoch + 1;
        save_params(tc.checkpoint_path, params, adam_records(state, params, next_epoch));
    }
    return result;
}

void write_loss_log(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_loss_log: cannot open '" + path + "'");
    char buf[256];
    for (const EpochLog& e : log) {
        std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.17g\t%.3f\n", e.epoch, e.mean_loss,
                      e.beta, e.gamma, e.seconds);
        os << buf;
    }
}

std::vector<NamedTensor> adam_records(const AdamState& state, const ModelParams& params,
                                      std::size_t next_epoch) {
    std::vector<NamedTensor> records;
    records.reserve(2 * params.count() + 2);
    records.push_back({"optim/step", Tensor::scalar(static_cast<double>(state.step))});
    records.push_back({"optim/epoch", Tensor::scalar(static_cast<double>(next_epoch))});
    for (std::size_t i = 0; i < params.count(); ++i) {
        records.push_back({"optim/m/" + params.name(i), Tensor({state.m[i].size()}, state.m[i])});
        records.push_back({"optim/v/" + params.name(i), Tensor({state.v[i].size()}, state.v[i])});
    }
    return records;
}

std::size_t restore_adam(const std::vector<NamedTensor>& records, const ModelParams& params,
                         AdamState& state) {
    std::size_t next_epoch = 0;
    bool saw_step = false;
    for (const NamedTensor& rec : records) {
        if (rec.name == "optim/step") {
            state.step = static_cast<std::size_t>(rec.tensor.item());
            saw_step = true;
        } else if (rec.name == "optim/epoch") {
            next_epoch = static_cast<std::size_t>(rec.tensor.item());
        } else if (rec.name.rfind("optim/m/", 0) == 0 || rec.name.rfind("optim/v/", 0) == 0) {
            const bool is_m = rec.name[6] == 'm';
            const std::string pname = rec.name.substr(8);
            for (std::size_t i = 0; i < params.count(); ++i) {
                if (params.name(i) == pname) {
                    (is_m ? state.m : state.v)[i] = rec.tensor.data;
                    break;
                }
            }
        }
    }
    if (!saw_step) throw DataError("restore_adam: checkpoint lacks optimizer state");
    return next_epoch;
}

}  // namespace pointloc
