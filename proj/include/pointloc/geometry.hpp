#ifndef POINTLOC_GEOMETRY_HPP_
#define POINTLOC_GEOMETRY_HPP_

#include <array>
#include <cmath>

#include "pointloc/common.hpp"

namespace pointloc {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

/// Unit quaternion, scalar part first: q = (u, v1, v2, v3).
struct Quat {
    double u = 1.0, v1 = 0.0, v2 = 0.0, v3 = 0.0;

    double norm() const { return std::sqrt(u * u + v1 * v1 + v2 * v2 + v3 * v3); }
    Quat negated() const { return {-u, -v1, -v2, -v3}; }
    double dot(const Quat& o) const { return u * o.u + v1 * o.v1 + v2 * o.v2 + v3 * o.v3; }
};

/// Rigid placement: q rotates sensor-frame vectors into the world frame,
/// then t translates (world frame, meters).
struct Pose {
    Vec3 t;
    Quat q;
};

/// Regression target form: translation plus log-quaternion.
struct LogPose {
    Vec3 t;
    Vec3 w;
};

/// q / ||q||. Throws NumericError when ||q|| <= 1e-12.
Quat quat_normalize(const Quat& q);

/// Flips sign so the scalar part is non-negative; u == 0 is kept as-is.
Quat quat_canonicalize(const Quat& q);

/// (v/||v||) * arccos(u), or zero when v vanishes. Canonical inputs map
/// into the ball of radius pi/2.
Vec3 quat_log(const Quat& q);

/// Inverse of quat_log: (cos||w||, sin||w||* w/||w||). Requires ||w|| <= pi.
Quat quat_exp(const Vec3& w);

/// Geodesic angle 2*arccos(min(1, |<q, q_hat>|)) in degrees; sign-invariant.
double rotation_error_deg(const Quat& q, const Quat& q_hat);

/// Euclidean distance in meters.
double translation_error_m(const Vec3& t, const Vec3& t_hat);

/// Hamilton product.
Quat quat_mul(const Quat& a, const Quat& b);

/// Rotates a vector by the quaternion.
Vec3 quat_rotate(const Quat& q, const Vec3& p);

/// Intrinsic yaw (z), pitch (y), roll (x) composition, normalized.
Quat quat_from_yaw_pitch_roll(double yaw, double pitch, double roll);

}  // namespace pointloc

#endif  // POINTLOC_GEOMETRY_HPP_
