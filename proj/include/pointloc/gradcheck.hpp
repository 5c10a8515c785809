#ifndef POINTLOC_GRADCHECK_HPP_
#define POINTLOC_GRADCHECK_HPP_

#include <cstdint>
#include <functional>

#include "pointloc/tape.hpp"

namespace pointloc {

/// Builds a scalar computation on the given tape from a leaf holding theta.
/// Must be deterministic: the checker evaluates it repeatedly.
using ScalarBuilder = std::function<ValueId(Tape&, ValueId theta)>;

struct FiniteDiffOptions {
    double eps = 1e-5;
    std::size_t max_coords = 0;   // 0 = check every coordinate
    std::uint64_t coord_seed = 0; // coordinate subsampling stream
};

/// Central-difference check of backward-pass gradients w.r.t. theta.
/// Returns max over checked coordinates of |fd - grad| / max(1, |fd|, |grad|).
/// Throws NumericError if two evaluations of f at theta disagree bitwise.
double finite_diff_check(const ScalarBuilder& f, const Tensor& theta,
                         const FiniteDiffOptions& opt = {});

}  // namespace pointloc

#endif  // POINTLOC_GRADCHECK_HPP_
