#ifndef POINTLOC_TENSOR_HPP_
#define POINTLOC_TENSOR_HPP_

#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pointloc/common.hpp"

namespace pointloc {

/// Dense float64 tensor in row-major order with an optional gradient slot.
///
/// Row-wise operations treat the last dimension as channels and the product
/// of all leading dimensions as rows; a shape of {1} is a scalar.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty, or same length as data

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size())
            throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "{";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << "}";
        return os.str();
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t size() const { return data.size(); }

    /// Product of all leading dimensions (1 for rank-0/rank-1 tensors).
    std::size_t rows() const {
        if (shape.size() <= 1) return 1;
        std::size_t r = 1;
        for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
        return r;
    }

    /// Last dimension.
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

    double item() const {
        if (size() != 1) throw ShapeError("Tensor::item: tensor has " + std::to_string(size()) + " elements");
        return data[0];
    }

    void alloc_grad() { grad.assign(data.size(), 0.0); }
};

}  // namespace pointloc

#endif  // POINTLOC_TENSOR_HPP_
