#ifndef POINTLOC_LOSS_HPP_
#define POINTLOC_LOSS_HPP_

#include <vector>

#include "pointloc/geometry.hpp"
#include "pointloc/model.hpp"

namespace pointloc {

/// L = ||t - t_hat||_1 e^{-beta} + beta + ||w - w_hat||_1 e^{-gamma} + gamma,
/// differentiable in the prediction and in both factors. Targets must come
/// from quat_canonicalize followed by quat_log.
ValueId pose_loss(Tape& tape, const PoseOutput& pred, const LogPose& target, ValueId beta,
                  ValueId gamma);

/// Mean of per-sample pose losses over an aligned batch.
ValueId batch_loss(Tape& tape, const std::vector<PoseOutput>& preds,
                   const std::vector<LogPose>& targets, ValueId beta, ValueId gamma);

}  // namespace pointloc

#endif  // POINTLOC_LOSS_HPP_
