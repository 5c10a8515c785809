#include <cmath>
#include <limits>

#include "doctest.h"
#include "pointloc/gradcheck.hpp"
#include "pointloc/loss.hpp"

using namespace pointloc;

namespace {

struct LossSetup {
    Tape tape;
    PoseOutput pred;
    ValueId beta;
    ValueId gamma;
};

// Scalar prediction leaves plus factor leaves; factors require gradients.
LossSetup make_setup(const Vec3& t, const Vec3& w, double beta0, double gamma0) {
    LossSetup s;
    Tensor tp({1, 3}, {t.x, t.y, t.z});
    tp.requires_grad = true;
    Tensor wp({1, 3}, {w.x, w.y, w.z});
    wp.requires_grad = true;
    s.pred.t = s.tape.leaf(std::move(tp));
    s.pred.w = s.tape.leaf(std::move(wp));
    Tensor b = Tensor::scalar(beta0);
    b.requires_grad = true;
    Tensor g = Tensor::scalar(gamma0);
    g.requires_grad = true;
    s.beta = s.tape.leaf(std::move(b));
    s.gamma = s.tape.leaf(std::move(g));
    return s;
}

}  // namespace

TEST_CASE("pose_loss at zero residual equals beta + gamma exactly") {
    LossSetup s = make_setup({1, 2, 3}, {0.1, 0.2, 0.3}, 0.0, -3.0);
    const LogPose target{{1, 2, 3}, {0.1, 0.2, 0.3}};
    const ValueId loss = pose_loss(s.tape, s.pred, target, s.beta, s.gamma);
    CHECK(s.tape.value(loss).item() == -3.0);
}

TEST_CASE("pose_loss matches the scalar formula") {
    // ||dt||_1 = 2, ||dw||_1 = 0.1, beta = 0, gamma = -3.
    LossSetup s = make_setup({2, 0, 0}, {0.1, 0, 0}, 0.0, -3.0);
    const LogPose target{{0, 0, 0}, {0, 0, 0}};
    const ValueId loss = pose_loss(s.tape, s.pred, target, s.beta, s.gamma);
    const double expected = 2.0 * std::exp(-0.0) + 0.0 + 0.1 * std::exp(3.0) - 3.0;
    CHECK(s.tape.value(loss).item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(s.tape.value(loss).item() == doctest::Approx(1.00855369231876677).epsilon(1e-12));
}

TEST_CASE("dL/dbeta at zero translation residual is exactly one") {
    LossSetup s = make_setup({1, 1, 1}, {0.5, 0, 0}, 0.7, -1.2);
    const LogPose target{{1, 1, 1}, {0.1, 0, 0}};
    const ValueId loss = pose_loss(s.tape, s.pred, target, s.beta, s.gamma);
    s.tape.backward(loss);
    CHECK(s.tape.grad(s.beta)[0] == 1.0);
}

TEST_CASE("factor gradients match the closed form and finite differences") {
    const Vec3 t_pred{2.0, -1.0, 0.5};
    const Vec3 w_pred{0.3, 0.1, -0.2};
    const LogPose target{{1.0, 0.5, 0.0}, {0.05, -0.1, 0.1}};
    const double l1_t = std::fabs(2.0 - 1.0) + std::fabs(-1.0 - 0.5) + std::fabs(0.5 - 0.0);
    const double l1_w = std::fabs(0.3 - 0.05) + std::fabs(0.1 + 0.1) + std::fabs(-0.2 - 0.1);

    LossSetup s = make_setup(t_pred, w_pred, 0.4, -0.9);
    const ValueId loss = pose_loss(s.tape, s.pred, target, s.beta, s.gamma);
    s.tape.backward(loss);
    CHECK(s.tape.grad(s.beta)[0] ==
          doctest::Approx(-l1_t * std::exp(-0.4) + 1.0).epsilon(1e-14));
    CHECK(s.tape.grad(s.gamma)[0] ==
          doctest::Approx(-l1_w * std::exp(0.9) + 1.0).epsilon(1e-14));

    // Finite differences over (beta, gamma) packed into one tensor.
    const Tensor theta({2}, {0.4, -0.9});
    const auto f = [&](Tape& tape, ValueId th) {
        const ValueId beta = tape.gather_rows(tape.reshape(th, {2, 1}), {0});
        const ValueId gamma = tape.gather_rows(tape.reshape(th, {2, 1}), {1});
        PoseOutput pred;
        pred.t = tape.leaf(Tensor({1, 3}, {t_pred.x, t_pred.y, t_pred.z}));
        pred.w = tape.leaf(Tensor({1, 3}, {w_pred.x, w_pred.y, w_pred.z}));
        return pose_loss(tape, pred, target, tape.reshape(beta, {1}), tape.reshape(gamma, {1}));
    };
    CHECK(finite_diff_check(f, theta, {1e-6}) < 1e-6);
}

TEST_CASE("loss is monotone in each residual magnitude") {
    const LogPose target{{0, 0, 0}, {0, 0, 0}};
    double previous = -std::numeric_limits<double>::infinity();
    for (double r = 0.0; r <= 2.0; r += 0.25) {
        LossSetup s = make_setup({r, 0, 0}, {r / 10, 0, 0}, 0.2, -1.0);
        const double L = s.tape.value(pose_loss(s.tape, s.pred, target, s.beta, s.gamma)).item();
        CHECK(L > previous);
        previous = L;
    }
}

TEST_CASE("beta drifts toward ln||dt||_1 on a frozen residual") {
    // Minimize L over beta alone with plain gradient steps.
    const double residual = 2.5;
    double beta = 0.0;
    for (int iter = 0; iter < 4000; ++iter) {
        const double grad = -residual * std::exp(-beta) + 1.0;
        beta -= 0.01 * grad;
    }
    CHECK(beta == doctest::Approx(std::log(residual)).epsilon(1e-6));

    // And the autodiff gradient agrees with the closed form along the way.
    LossSetup s = make_setup({residual, 0, 0}, {0, 0, 0}, 0.31, -0.5);
    const LogPose target{{0, 0, 0}, {0, 0, 0}};
    s.tape.backward(pose_loss(s.tape, s.pred, target, s.beta, s.gamma));
    CHECK(s.tape.grad(s.beta)[0] ==
          doctest::Approx(-residual * std::exp(-0.31) + 1.0).epsilon(1e-14));
}

TEST_CASE("batch_loss") {
    const LogPose target_a{{1, 0, 0}, {0.1, 0, 0}};
    const LogPose target_b{{0, 2, 0}, {0, 0.2, 0}};

    const auto single = [&](const LogPose& target) {
        LossSetup s = make_setup({0.5, 0.5, 0.5}, {0.05, 0.05, 0.05}, 0.0, -3.0);
        return s.tape.value(pose_loss(s.tape, s.pred, target, s.beta, s.gamma)).item();
    };

    const auto batched = [&](const std::vector<LogPose>& targets) {
        Tape tape;
        std::vector<PoseOutput> preds;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            PoseOutput p;
            p.t = tape.leaf(Tensor({1, 3}, {0.5, 0.5, 0.5}));
            p.w = tape.leaf(Tensor({1, 3}, {0.05, 0.05, 0.05}));
            preds.push_back(p);
        }
        const ValueId beta = tape.leaf(Tensor::scalar(0.0));
        const ValueId gamma = tape.leaf(Tensor::scalar(-3.0));
        return tape.value(batch_loss(tape, preds, targets, beta, gamma)).item();
    };

    SUBCASE("a batch of one equals pose_loss") {
        CHECK(batched({target_a}) == single(target_a));
    }
    SUBCASE("two identical samples average to the same value") {
        CHECK(batched({target_a, target_a}) == doctest::Approx(single(target_a)).epsilon(1e-15));
    }
    SUBCASE("permutation leaves the mean unchanged") {
        CHECK(batched({target_a, target_b}) ==
              doctest::Approx(batched({target_b, target_a})).epsilon(1e-15));
    }
    SUBCASE("empty batch rejected") {
        Tape tape;
        const ValueId beta = tape.leaf(Tensor::scalar(0.0));
        const ValueId gamma = tape.leaf(Tensor::scalar(-3.0));
        CHECK_THROWS_AS(batch_loss(tape, {}, {}, beta, gamma), DataError);
    }
}
