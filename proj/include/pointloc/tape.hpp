#ifndef POINTLOC_TAPE_HPP_
#define POINTLOC_TAPE_HPP_

#include <cstddef>
#include <vector>

#include "pointloc/tensor.hpp"

namespace pointloc {

using ValueId = std::size_t;

enum class OpKind {
    kLeaf,
    kPointwiseLinear,
    kLeakyRelu,
    kSigmoid,
    kGroupedMaxPool,
    kAdd,
    kMul,
    kBroadcastMulRow,
    kL1Distance,
    kExp,
    kScale,
    kSum,
    kGatherRows,
    kConcatCols,
    kReshape,
};

/// Reverse-mode autodiff tape over dense float64 tensors.
///
/// Nodes are appended in topological order (inputs always precede consumers),
/// so a single reverse sweep propagates gradients, visiting each node once.
/// Every value entering the graph is checked finite.
class Tape {
public:
    /// Registers an input tensor. Gradients flow into it iff t.requires_grad.
    ValueId leaf(Tensor t);

    /// out[r] = in[r] * weight + bias, applied to every row r.
    /// input: {..., Cin}; weight: {Cin, Cout}; bias: {Cout}.
    ValueId pointwise_linear(ValueId input, ValueId weight, ValueId bias);

    /// Elementwise x >= 0 ? x : slope * x, with slope in (0, 1).
    ValueId leaky_relu(ValueId x, double slope);

    /// Elementwise logistic, output clamped to the open interval (0, 1).
    ValueId sigmoid(ValueId x);

    /// Columnwise max over the first valid_counts[j] rows of group j.
    /// features: {M, K, C}; valid_counts: M entries in [1, K]. Ties break
    /// toward the lowest row index; backward routes to the argmax entry only.
    ValueId grouped_max_pool(ValueId features, const std::vector<std::size_t>& valid_counts);

    ValueId add(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);

    /// a: {..., C} scaled per-column by mask {1, C}. Mask gradients sum over rows.
    ValueId broadcast_mul_row(ValueId a, ValueId mask);

    /// sum(|a - b|) as a scalar; subgradient at zero residual is zero.
    ValueId l1_distance(ValueId a, ValueId b);

    ValueId exp(ValueId x);

    /// Multiplication by a compile-time constant factor.
    ValueId scale(ValueId x, double factor);

    /// Sum of all elements, as a scalar.
    ValueId sum(ValueId x);

    /// out row i = source row rows[i]; source: {N, C}. Backward scatter-adds.
    ValueId gather_rows(ValueId source, const std::vector<std::size_t>& rows);

    /// Concatenate along the channel (last) dimension; leading shape from a.
    ValueId concat_cols(ValueId a, ValueId b);

    /// Same data, new shape (element counts must agree).
    ValueId reshape(ValueId x, std::vector<std::size_t> new_shape);

    const Tensor& value(ValueId id) const { return nodes_[id].value; }

    /// Argmax row indices ({M, C} flattened) recorded by grouped_max_pool.
    const std::vector<std::size_t>& pool_argmax(ValueId pooled) const;

    /// Propagates dL/dx from a scalar root into every requires_grad tensor
    /// reachable from it; unreachable requires_grad tensors get zero grads.
    /// Replaying backward on the same tape yields bit-identical gradients.
    void backward(ValueId root);

    const std::vector<double>& grad(ValueId id) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind op = OpKind::kLeaf;
        std::vector<ValueId> inputs;
        Tensor value;
        std::vector<std::size_t> aux;  // argmax (max pool) or row map (gather)
        double scalar = 0.0;           // slope (leaky_relu) or factor (scale)
        bool needs_grad = false;       // own requires_grad or any input's
    };

    ValueId push(Node n);
    void check_id(ValueId id) const;

    std::vector<Node> nodes_;
};

}  // namespace pointloc

#endif  // POINTLOC_TAPE_HPP_
