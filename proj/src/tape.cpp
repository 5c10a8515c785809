#include "pointloc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace pointloc {

namespace {

void require_finite(const Tensor& t, const char* where) {
    if (!all_finite(t.data))
        throw NumericError(std::string(where) + ": non-finite value entering the graph");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(where) + ": shape mismatch " + Tensor::shape_str(a.shape) +
                         " vs " + Tensor::shape_str(b.shape));
}

}  // namespace

ValueId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

void Tape::check_id(ValueId id) const {
    if (id >= nodes_.size()) throw ShapeError("Tape: value id out of range");
}

ValueId Tape::leaf(Tensor t) {
    require_finite(t, "leaf");
    if (t.shape.empty() || t.data.empty())
        throw ShapeError("leaf: empty tensor");
    Node n;
    n.op = OpKind::kLeaf;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    return push(std::move(n));
}

ValueId Tape::pointwise_linear(ValueId input, ValueId weight, ValueId bias) {
    check_id(input);
    check_id(weight);
    check_id(bias);
    const Tensor& in = nodes_[input].value;
    const Tensor& w = nodes_[weight].value;
    const Tensor& b = nodes_[bias].value;
    if (w.shape.size() != 2)
        throw ShapeError("pointwise_linear: weight must be rank-2, got " + Tensor::shape_str(w.shape));
    const std::size_t cin = w.shape[0];
    const std::size_t cout = w.shape[1];
    if (in.cols() != cin)
        throw ShapeError("pointwise_linear: input " + Tensor::shape_str(in.shape) +
                         " incompatible with weight " + Tensor::shape_str(w.shape));
    if (b.size() != cout)
        throw ShapeError("pointwise_linear: bias " + Tensor::shape_str(b.shape) +
                         " incompatible with weight " + Tensor::shape_str(w.shape));

    const std::size_t rows = in.rows();
    std::vector<std::size_t> out_shape = in.shape;
    out_shape.back() = cout;
    Tensor out = Tensor::zeros(std::move(out_shape));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in_row = in.data.data() + r * cin;
        double* out_row = out.data.data() + r * cout;
        std::memcpy(out_row, b.data.data(), cout * sizeof(double));
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = in_row[ci];
            const double* w_row = w.data.data() + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) out_row[co] += a * w_row[co];
        }
    }
    require_finite(out, "pointwise_linear");

    Node n;
    n.op = OpKind::kPointwiseLinear;
    n.inputs = {input, weight, bias};
    n.needs_grad = nodes_[input].needs_grad || nodes_[weight].needs_grad || nodes_[bias].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::leaky_relu(ValueId x, double slope) {
    check_id(x);
    if (!(slope > 0.0 && slope < 1.0))
        throw NumericError("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
    const Tensor& in = nodes_[x].value;
    Tensor out = in;
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data)
        if (v < 0.0) v *= slope;

    Node n;
    n.op = OpKind::kLeakyRelu;
    n.inputs = {x};
    n.scalar = slope;
    n.needs_grad = nodes_[x].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::sigmoid(ValueId x) {
    check_id(x);
    const Tensor& in = nodes_[x].value;
    Tensor out = Tensor::zeros(in.shape);
    const double lo = std::nextafter(0.0, 1.0);
    const double hi = std::nextafter(1.0, 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in.data[i];
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            s = e / (1.0 + e);
        }
        out.data[i] = std::min(hi, std::max(lo, s));
    }

    Node n;
    n.op = OpKind::kSigmoid;
    n.inputs = {x};
    n.needs_grad = nodes_[x].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::grouped_max_pool(ValueId features, const std::vector<std::size_t>& valid_counts) {
    check_id(features);
    const Tensor& in = nodes_[features].value;
    if (in.shape.size() != 3)
        throw ShapeError("grouped_max_pool: features must be rank-3 {M,K,C}, got " +
                         Tensor::shape_str(in.shape));
    const std::size_t m = in.shape[0];
    const std::size_t k = in.shape[1];
    const std::size_t c = in.shape[2];
    if (valid_counts.size() != m)
        throw ShapeError("grouped_max_pool: valid_counts length " + std::to_string(valid_counts.size()) +
                         " does not match group count " + std::to_string(m));

    Tensor out = Tensor::zeros({m, c});
    std::vector<std::size_t> argmax(m * c);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t valid = valid_counts[j];
        if (valid == 0) throw DataError("grouped_max_pool: empty group " + std::to_string(j));
        if (valid > k)
            throw ShapeError("grouped_max_pool: valid count " + std::to_string(valid) +
                             " exceeds group capacity " + std::to_string(k));
        const double* grp = in.data.data() + j * k * c;
        double* out_row = out.data.data() + j * c;
        std::size_t* am_row = argmax.data() + j * c;
        std::memcpy(out_row, grp, c * sizeof(double));
        std::fill(am_row, am_row + c, std::size_t{0});
        for (std::size_t r = 1; r < valid; ++r) {
            const double* row = grp + r * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                if (row[ch] > out_row[ch]) {
                    out_row[ch] = row[ch];
                    am_row[ch] = r;
                }
            }
        }
    }

    Node n;
    n.op = OpKind::kGroupedMaxPool;
    n.inputs = {features};
    n.aux = std::move(argmax);
    n.needs_grad = nodes_[features].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_same_shape(ta, tb, "add");
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < ta.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
    require_finite(out, "add");

    Node n;
    n.op = OpKind::kAdd;
    n.inputs = {a, b};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_same_shape(ta, tb, "mul");
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < ta.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
    require_finite(out, "mul");

    Node n;
    n.op = OpKind::kMul;
    n.inputs = {a, b};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::broadcast_mul_row(ValueId a, ValueId mask) {
    check_id(a);
    check_id(mask);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tm = nodes_[mask].value;
    const std::size_t c = ta.cols();
    if (tm.shape != std::vector<std::size_t>{1, c})
        throw ShapeError("broadcast_mul_row: mask " + Tensor::shape_str(tm.shape) +
                         " incompatible with input " + Tensor::shape_str(ta.shape));
    const std::size_t rows = ta.rows();
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in_row = ta.data.data() + r * c;
        double* out_row = out.data.data() + r * c;
        for (std::size_t ch = 0; ch < c; ++ch) out_row[ch] = in_row[ch] * tm.data[ch];
    }
    require_finite(out, "broadcast_mul_row");

    Node n;
    n.op = OpKind::kBroadcastMulRow;
    n.inputs = {a, mask};
    n.needs_grad = nodes_[a].needs_grad || nodes_[mask].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::l1_distance(ValueId a, ValueId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_same_shape(ta, tb, "l1_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += std::fabs(ta.data[i] - tb.data[i]);
    if (!std::isfinite(s)) throw NumericError("l1_distance: non-finite result");

    Node n;
    n.op = OpKind::kL1Distance;
    n.inputs = {a, b};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

ValueId Tape::exp(ValueId x) {
    check_id(x);
    const Tensor& in = nodes_[x].value;
    Tensor out = Tensor::zeros(in.shape);
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = std::exp(in.data[i]);
    require_finite(out, "exp");

    Node n;
    n.op = OpKind::kExp;
    n.inputs = {x};
    n.needs_grad = nodes_[x].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::scale(ValueId x, double factor) {
    check_id(x);
    if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
    const Tensor& in = nodes_[x].value;
    Tensor out = Tensor::zeros(in.shape);
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] * factor;

    Node n;
    n.op = OpKind::kScale;
    n.inputs = {x};
    n.scalar = factor;
    n.needs_grad = nodes_[x].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::sum(ValueId x) {
    check_id(x);
    const Tensor& in = nodes_[x].value;
    double s = 0.0;
    for (double v : in.data) s += v;
    if (!std::isfinite(s)) throw NumericError("sum: non-finite result");

    Node n;
    n.op = OpKind::kSum;
    n.inputs = {x};
    n.needs_grad = nodes_[x].needs_grad;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

ValueId Tape::gather_rows(ValueId source, const std::vector<std::size_t>& rows) {
    check_id(source);
    const Tensor& src = nodes_[source].value;
    if (src.shape.size() != 2)
        throw ShapeError("gather_rows: source must be rank-2, got " + Tensor::shape_str(src.shape));
    const std::size_t n = src.shape[0];
    const std::size_t c = src.shape[1];
    Tensor out = Tensor::zeros({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n)
            throw ShapeError("gather_rows: row index " + std::to_string(rows[i]) +
                             " out of range for source with " + std::to_string(n) + " rows");
        std::memcpy(out.data.data() + i * c, src.data.data() + rows[i] * c, c * sizeof(double));
    }

    Node n2;
    n2.op = OpKind::kGatherRows;
    n2.inputs = {source};
    n2.aux = rows;
    n2.needs_grad = nodes_[source].needs_grad;
    n2.value = std::move(out);
    return push(std::move(n2));
}

ValueId Tape::concat_cols(ValueId a, ValueId b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.rows() != tb.rows())
        throw ShapeError("concat_cols: row counts differ, " + Tensor::shape_str(ta.shape) + " vs " +
                         Tensor::shape_str(tb.shape));
    const std::size_t rows = ta.rows();
    const std::size_t ca = ta.cols();
    const std::size_t cb = tb.cols();
    std::vector<std::size_t> out_shape = ta.shape;
    out_shape.back() = ca + cb;
    Tensor out = Tensor::zeros(std::move(out_shape));
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(out.data.data() + r * (ca + cb), ta.data.data() + r * ca, ca * sizeof(double));
        std::memcpy(out.data.data() + r * (ca + cb) + ca, tb.data.data() + r * cb, cb * sizeof(double));
    }

    Node n;
    n.op = OpKind::kConcatCols;
    n.inputs = {a, b};
    n.aux = {ca, cb};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::reshape(ValueId x, std::vector<std::size_t> new_shape) {
    check_id(x);
    const Tensor& in = nodes_[x].value;
    if (Tensor::numel(new_shape) != in.size())
        throw ShapeError("reshape: " + Tensor::shape_str(in.shape) + " to " +
                         Tensor::shape_str(new_shape) + " changes element count");
    Tensor out(std::move(new_shape), in.data);

    Node n;
    n.op = OpKind::kReshape;
    n.inputs = {x};
    n.needs_grad = nodes_[x].needs_grad;
    n.value = std::move(out);
    return push(std::move(n));
}

const std::vector<std::size_t>& Tape::pool_argmax(ValueId pooled) const {
    check_id(pooled);
    if (nodes_[pooled].op != OpKind::kGroupedMaxPool)
        throw ShapeError("pool_argmax: value is not a grouped_max_pool result");
    return nodes_[pooled].aux;
}

const std::vector<double>& Tape::grad(ValueId id) const {
    check_id(id);
    return nodes_[id].value.grad;
}

void Tape::backward(ValueId root) {
    check_id(root);
    if (nodes_[root].value.size() != 1)
        throw ShapeError("backward: root must be scalar, got " +
                         Tensor::shape_str(nodes_[root].value.shape));

    // Fresh gradient buffers each pass so replays are bit-identical.
    for (Node& n : nodes_) {
        if (n.needs_grad || n.value.requires_grad)
            n.value.alloc_grad();
        else
            n.value.grad.clear();
    }

    // Inputs precede consumers, so one descending sweep both discovers
    // reachability and finishes each node's gradient before visiting it.
    std::vector<char> reachable(nodes_.size(), 0);
    reachable[root] = 1;
    if (nodes_[root].value.grad.empty()) nodes_[root].value.alloc_grad();
    nodes_[root].value.grad[0] = 1.0;

    for (std::size_t idx = root + 1; idx-- > 0;) {
        if (!reachable[idx] || !nodes_[idx].needs_grad) continue;
        Node& n = nodes_[idx];
        for (ValueId in : n.inputs)
            if (nodes_[in].needs_grad) reachable[in] = 1;

        const std::vector<double>& g = n.value.grad;
        switch (n.op) {
            case OpKind::kLeaf:
                break;
            case OpKind::kPointwiseLinear: {
                Node& in_n = nodes_[n.inputs[0]];
                Node& w_n = nodes_[n.inputs[1]];
                Node& b_n = nodes_[n.inputs[2]];
                const std::size_t cin = w_n.value.shape[0];
                const std::size_t cout = w_n.value.shape[1];
                const std::size_t rows = in_n.value.rows();
                const double* in_d = in_n.value.data.data();
                const double* w_d = w_n.value.data.data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g_row = g.data() + r * cout;
                    if (in_n.needs_grad) {
                        double* gin_row = in_n.value.grad.data() + r * cin;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double* w_row = w_d + ci * cout;
                            double acc = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) acc += g_row[co] * w_row[co];
                            gin_row[ci] += acc;
                        }
                    }
                    if (w_n.needs_grad) {
                        const double* in_row = in_d + r * cin;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double a = in_row[ci];
                            double* gw_row = w_n.value.grad.data() + ci * cout;
                            for (std::size_t co = 0; co < cout; ++co) gw_row[co] += a * g_row[co];
                        }
                    }
                    if (b_n.needs_grad) {
                        double* gb = b_n.value.grad.data();
                        for (std::size_t co = 0; co < cout; ++co) gb[co] += g_row[co];
                    }
                }
                break;
            }
            case OpKind::kLeakyRelu: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                const double slope = n.scalar;
                for (std::size_t i = 0; i < g.size(); ++i)
                    in_n.value.grad[i] += g[i] * (in_n.value.data[i] >= 0.0 ? 1.0 : slope);
                break;
            }
            case OpKind::kSigmoid: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value.data[i];
                    in_n.value.grad[i] += g[i] * s * (1.0 - s);
                }
                break;
            }
            case OpKind::kGroupedMaxPool: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                const std::size_t m = in_n.value.shape[0];
                const std::size_t k = in_n.value.shape[1];
                const std::size_t c = in_n.value.shape[2];
                for (std::size_t j = 0; j < m; ++j) {
                    const double* g_row = g.data() + j * c;
                    const std::size_t* am_row = n.aux.data() + j * c;
                    double* gin = in_n.value.grad.data() + j * k * c;
                    for (std::size_t ch = 0; ch < c; ++ch) gin[am_row[ch] * c + ch] += g_row[ch];
                }
                break;
            }
            case OpKind::kAdd: {
                for (int s = 0; s < 2; ++s) {
                    Node& in_n = nodes_[n.inputs[s]];
                    if (!in_n.needs_grad) continue;
                    for (std::size_t i = 0; i < g.size(); ++i) in_n.value.grad[i] += g[i];
                }
                break;
            }
            case OpKind::kMul: {
                Node& a_n = nodes_[n.inputs[0]];
                Node& b_n = nodes_[n.inputs[1]];
                if (a_n.needs_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) a_n.value.grad[i] += g[i] * b_n.value.data[i];
                if (b_n.needs_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) b_n.value.grad[i] += g[i] * a_n.value.data[i];
                break;
            }
            case OpKind::kBroadcastMulRow: {
                Node& a_n = nodes_[n.inputs[0]];
                Node& m_n = nodes_[n.inputs[1]];
                const std::size_t c = a_n.value.cols();
                const std::size_t rows = a_n.value.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g_row = g.data() + r * c;
                    if (a_n.needs_grad) {
                        double* ga = a_n.value.grad.data() + r * c;
                        for (std::size_t ch = 0; ch < c; ++ch) ga[ch] += g_row[ch] * m_n.value.data[ch];
                    }
                    if (m_n.needs_grad) {
                        const double* a_row = a_n.value.data.data() + r * c;
                        for (std::size_t ch = 0; ch < c; ++ch)
                            m_n.value.grad[ch] += g_row[ch] * a_row[ch];
                    }
                }
                break;
            }
            case OpKind::kL1Distance: {
                Node& a_n = nodes_[n.inputs[0]];
                Node& b_n = nodes_[n.inputs[1]];
                const double g0 = g[0];
                for (std::size_t i = 0; i < a_n.value.size(); ++i) {
                    const double d = a_n.value.data[i] - b_n.value.data[i];
                    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    if (a_n.needs_grad) a_n.value.grad[i] += g0 * s;
                    if (b_n.needs_grad) b_n.value.grad[i] -= g0 * s;
                }
                break;
            }
            case OpKind::kExp: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                for (std::size_t i = 0; i < g.size(); ++i) in_n.value.grad[i] += g[i] * n.value.data[i];
                break;
            }
            case OpKind::kScale: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                for (std::size_t i = 0; i < g.size(); ++i) in_n.value.grad[i] += g[i] * n.scalar;
                break;
            }
            case OpKind::kSum: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                const double g0 = g[0];
                for (std::size_t i = 0; i < in_n.value.size(); ++i) in_n.value.grad[i] += g0;
                break;
            }
            case OpKind::kGatherRows: {
                Node& src = nodes_[n.inputs[0]];
                if (!src.needs_grad) break;
                const std::size_t c = src.value.shape[1];
                for (std::size_t i = 0; i < n.aux.size(); ++i) {
                    const double* g_row = g.data() + i * c;
                    double* gs = src.value.grad.data() + n.aux[i] * c;
                    for (std::size_t ch = 0; ch < c; ++ch) gs[ch] += g_row[ch];
                }
                break;
            }
            case OpKind::kConcatCols: {
                Node& a_n = nodes_[n.inputs[0]];
                Node& b_n = nodes_[n.inputs[1]];
                const std::size_t ca = n.aux[0];
                const std::size_t cb = n.aux[1];
                const std::size_t rows = a_n.value.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g_row = g.data() + r * (ca + cb);
                    if (a_n.needs_grad) {
                        double* ga = a_n.value.grad.data() + r * ca;
                        for (std::size_t ch = 0; ch < ca; ++ch) ga[ch] += g_row[ch];
                    }
                    if (b_n.needs_grad) {
                        double* gb = b_n.value.grad.data() + r * cb;
                        for (std::size_t ch = 0; ch < cb; ++ch) gb[ch] += g_row[ca + ch];
                    }
                }
                break;
            }
            case OpKind::kReshape: {
                Node& in_n = nodes_[n.inputs[0]];
                if (!in_n.needs_grad) break;
                for (std::size_t i = 0; i < g.size(); ++i) in_n.value.grad[i] += g[i];
                break;
            }
        }
    }
}

}  // namespace pointloc
