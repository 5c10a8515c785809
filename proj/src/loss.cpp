#include "pointloc/loss.hpp"

namespace pointloc {

ValueId pose_loss(Tape& tape, const PoseOutput& pred, const LogPose& target, ValueId beta,
                  ValueId gamma) {
    const ValueId t_target = tape.leaf(Tensor({1, 3}, {target.t.x, target.t.y, target.t.z}));
    const ValueId w_target = tape.leaf(Tensor({1, 3}, {target.w.x, target.w.y, target.w.z}));

    const ValueId t_term =
        tape.mul(tape.l1_distance(pred.t, t_target), tape.exp(tape.scale(beta, -1.0)));
    const ValueId w_term =
        tape.mul(tape.l1_distance(pred.w, w_target), tape.exp(tape.scale(gamma, -1.0)));
    return tape.add(tape.add(t_term, beta), tape.add(w_term, gamma));
}

ValueId batch_loss(Tape& tape, const std::vector<PoseOutput>& preds,
                   const std::vector<LogPose>& targets, ValueId beta, ValueId gamma) {
    if (preds.empty()) throw DataError("batch_loss: empty batch");
    if (preds.size() != targets.size())
        throw ShapeError("batch_loss: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");

    ValueId acc = pose_loss(tape, preds[0], targets[0], beta, gamma);
    for (std::size_t i = 1; i < preds.size(); ++i)
        acc = tape.add(acc, pose_loss(tape, preds[i], targets[i], beta, gamma));
    return tape.scale(acc, 1.0 / static_cast<double>(preds.size()));
}

}  // namespace pointloc
