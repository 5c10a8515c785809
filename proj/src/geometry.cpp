#include "pointloc/geometry.hpp"

#include <algorithm>

namespace pointloc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Quat quat_normalize(const Quat& q) {
    const double n = q.norm();
    if (!(n > 1e-12)) throw NumericError("quat_normalize: degenerate quaternion, norm " + std::to_string(n));
    return {q.u / n, q.v1 / n, q.v2 / n, q.v3 / n};
}

Quat quat_canonicalize(const Quat& q) {
    return q.u < 0.0 ? q.negated() : q;
}

Vec3 quat_log(const Quat& q) {
    const Vec3 v{q.v1, q.v2, q.v3};
    const double vn = v.norm();
    if (vn == 0.0) return {0.0, 0.0, 0.0};
    const double angle = std::acos(std::clamp(q.u, -1.0, 1.0));
    return v * (angle / vn);
}

Quat quat_exp(const Vec3& w) {
    const double wn = w.norm();
    if (wn > kPi) throw NumericError("quat_exp: ||w|| = " + std::to_string(wn) + " exceeds pi");
    if (wn == 0.0) return {1.0, 0.0, 0.0, 0.0};
    const double s = std::sin(wn) / wn;
    return {std::cos(wn), w.x * s, w.y * s, w.z * s};
}

double rotation_error_deg(const Quat& q, const Quat& q_hat) {
    // 2*arccos(min(1, |<q, q_hat>|)) evaluated through the shorter chord:
    // 2*arccos|cos(a/2)| == 4*arcsin(chord/2). The chord form is exact for
    // q_hat == +-q and well conditioned near zero error.
    const auto chord = [](const Quat& a, const Quat& b) {
        const double du = a.u - b.u, d1 = a.v1 - b.v1, d2 = a.v2 - b.v2, d3 = a.v3 - b.v3;
        return std::sqrt(du * du + d1 * d1 + d2 * d2 + d3 * d3);
    };
    const double half = 0.5 * std::min(chord(q, q_hat), chord(q, q_hat.negated()));
    return 4.0 * std::asin(std::min(1.0, half)) * 180.0 / kPi;
}

double translation_error_m(const Vec3& t, const Vec3& t_hat) {
    return (t - t_hat).norm();
}

Quat quat_mul(const Quat& a, const Quat& b) {
    return {
        a.u * b.u - a.v1 * b.v1 - a.v2 * b.v2 - a.v3 * b.v3,
        a.u * b.v1 + a.v1 * b.u + a.v2 * b.v3 - a.v3 * b.v2,
        a.u * b.v2 - a.v1 * b.v3 + a.v2 * b.u + a.v3 * b.v1,
        a.u * b.v3 + a.v1 * b.v2 - a.v2 * b.v1 + a.v3 * b.u,
    };
}

Vec3 quat_rotate(const Quat& q, const Vec3& p) {
    // q * (0, p) * conj(q), expanded.
    const Vec3 v{q.v1, q.v2, q.v3};
    const Vec3 t = v.cross(p) * 2.0;
    return p + t * q.u + v.cross(t);
}

Quat quat_from_yaw_pitch_roll(double yaw, double pitch, double roll) {
    const Quat qz{std::cos(yaw / 2), 0.0, 0.0, std::sin(yaw / 2)};
    const Quat qy{std::cos(pitch / 2), 0.0, std::sin(pitch / 2), 0.0};
    const Quat qx{std::cos(roll / 2), std::sin(roll / 2), 0.0, 0.0};
    return quat_normalize(quat_mul(quat_mul(qz, qy), qx));
}

}  // namespace pointloc
