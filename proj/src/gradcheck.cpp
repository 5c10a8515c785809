#include "pointloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pointloc/common.hpp"

namespace pointloc {

namespace {

double evaluate(const ScalarBuilder& f, const Tensor& theta) {
    Tape tape;
    Tensor t = theta;
    t.requires_grad = false;
    t.grad.clear();
    const ValueId root = f(tape, tape.leaf(std::move(t)));
    return tape.value(root).item();
}

}  // namespace

double finite_diff_check(const ScalarBuilder& f, const Tensor& theta, const FiniteDiffOptions& opt) {
    if (!(opt.eps > 0.0)) throw NumericError("finite_diff_check: eps must be positive");

    const double v0 = evaluate(f, theta);
    const double v1 = evaluate(f, theta);
    if (std::memcmp(&v0, &v1, sizeof(double)) != 0)
        throw NumericError("finite_diff_check: computation is not deterministic");

    // Reference gradients from one backward pass.
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor t = theta;
        t.requires_grad = true;
        const ValueId th = tape.leaf(std::move(t));
        const ValueId root = f(tape, th);
        tape.backward(root);
        analytic = tape.grad(th);
    }

    std::vector<std::size_t> coords(theta.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_coords > 0 && opt.max_coords < coords.size()) {
        Rng rng(opt.coord_seed);
        rng.shuffle(coords);
        coords.resize(opt.max_coords);
    }

    double worst = 0.0;
    Tensor probe = theta;
    probe.requires_grad = false;
    probe.grad.clear();
    for (std::size_t i : coords) {
        const double orig = probe.data[i];
        probe.data[i] = orig + opt.eps;
        const double fp = evaluate(f, probe);
        probe.data[i] = orig - opt.eps;
        const double fm = evaluate(f, probe);
        probe.data[i] = orig;
        const double fd = (fp - fm) / (2.0 * opt.eps);
        const double ref = analytic[i];
        const double rel = std::fabs(fd - ref) / std::max({1.0, std::fabs(fd), std::fabs(ref)});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace pointloc
