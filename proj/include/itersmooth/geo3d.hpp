#pragma once

// Rotation kinematics for the ZYX (yaw-pitch-roll) Euler convention.
//
// The body-to-navigation DCM is C = Rz(yaw) * Ry(pitch) * Rx(roll). The Euler
// rate matrix E maps body angular rate to (roll, pitch, yaw) rates and is
// singular at |pitch| = pi/2.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>

#include "itersmooth/errors.hpp"

namespace itersmooth {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDefaultGimbalEps = 1e-6;

struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;

    Vec3 vector() const { return {roll, pitch, yaw}; }
    static EulerAngles from_vector(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

    bool finite() const {
        return std::isfinite(roll) && std::isfinite(pitch) && std::isfinite(yaw);
    }

    friend bool operator==(const EulerAngles&, const EulerAngles&) = default;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    if (!std::isfinite(a)) throw InvalidArgument("wrap_angle: non-finite angle");
    double r = std::remainder(a, 2.0 * kPi);
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

inline Vec3 wrap_angles(const Vec3& a) {
    return {wrap_angle(a.x()), wrap_angle(a.y()), wrap_angle(a.z())};
}

inline EulerAngles wrap_angles(const EulerAngles& e) {
    return {wrap_angle(e.roll), wrap_angle(e.pitch), wrap_angle(e.yaw)};
}

namespace detail {

inline Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << 1, 0, 0,
         0, c, -s,
         0, s, c;
    return r;
}

inline Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, 0, s,
         0, 1, 0,
         -s, 0, c;
    return r;
}

inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, -s, 0,
         s, c, 0,
         0, 0, 1;
    return r;
}

inline Mat3 drot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << 0, 0, 0,
         0, -s, -c,
         0, c, -s;
    return r;
}

inline Mat3 drot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << -s, 0, c,
         0, 0, 0,
         -c, 0, -s;
    return r;
}

inline Mat3 drot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << -s, -c, 0,
         c, -s, 0,
         0, 0, 0;
    return r;
}

inline void require_finite(const EulerAngles& e, const char* who) {
    if (!e.finite()) throw InvalidArgument(std::string(who) + ": non-finite Euler angle");
}

inline void require_clear_of_gimbal_lock(const EulerAngles& e, double eps) {
    if (!(std::abs(e.pitch) < kPi / 2.0 - eps)) throw GimbalLockError(e.pitch, eps);
}

}  // namespace detail

/// Body-to-navigation direction cosine matrix.
inline Mat3 dcm_body_to_nav(const EulerAngles& e) {
    detail::require_finite(e, "dcm_body_to_nav");
    return detail::rot_z(e.yaw) * detail::rot_y(e.pitch) * detail::rot_x(e.roll);
}

/// Partial derivatives of the DCM with respect to roll, pitch and yaw.
inline std::array<Mat3, 3> dcm_partials(const EulerAngles& e) {
    detail::require_finite(e, "dcm_partials");
    const Mat3 rx = detail::rot_x(e.roll), ry = detail::rot_y(e.pitch), rz = detail::rot_z(e.yaw);
    return {rz * ry * detail::drot_x(e.roll),
            rz * detail::drot_y(e.pitch) * rx,
            detail::drot_z(e.yaw) * ry * rx};
}

/// Maps body angular rate to Euler angle rates.
inline Mat3 euler_rate_matrix(const EulerAngles& e, double gimbal_eps = kDefaultGimbalEps) {
    detail::require_finite(e, "euler_rate_matrix");
    detail::require_clear_of_gimbal_lock(e, gimbal_eps);
    const double sr = std::sin(e.roll), cr = std::cos(e.roll);
    const double tp = std::tan(e.pitch), cp = std::cos(e.pitch);
    Mat3 m;
    m << 1, sr * tp, cr * tp,
         0, cr, -sr,
         0, sr / cp, cr / cp;
    return m;
}

/// Inverse of euler_rate_matrix: Euler angle rates to body angular rate.
/// Defined everywhere, but only meaningful away from gimbal lock.
inline Mat3 euler_rate_matrix_inverse(const EulerAngles& e) {
    detail::require_finite(e, "euler_rate_matrix_inverse");
    const double sr = std::sin(e.roll), cr = std::cos(e.roll);
    const double sp = std::sin(e.pitch), cp = std::cos(e.pitch);
    Mat3 m;
    m << 1, 0, -sp,
         0, cr, sr * cp,
         0, -sr, cr * cp;
    return m;
}

/// Partial derivatives of the Euler rate matrix with respect to roll, pitch and
/// yaw. The yaw partial is identically zero.
inline std::array<Mat3, 3> euler_rate_partials(const EulerAngles& e,
                                               double gimbal_eps = kDefaultGimbalEps) {
    detail::require_finite(e, "euler_rate_partials");
    detail::require_clear_of_gimbal_lock(e, gimbal_eps);
    const double sr = std::sin(e.roll), cr = std::cos(e.roll);
    const double sp = std::sin(e.pitch), cp = std::cos(e.pitch);
    const double tp = sp / cp;
    const double sec2 = 1.0 / (cp * cp);
    Mat3 d_roll;
    d_roll << 0, cr * tp, -sr * tp,
              0, -sr, -cr,
              0, cr / cp, -sr / cp;
    Mat3 d_pitch;
    d_pitch << 0, sr * sec2, cr * sec2,
               0, 0, 0,
               0, sr * sp * sec2, cr * sp * sec2;
    return {d_roll, d_pitch, Mat3::Zero()};
}

}  // namespace itersmooth
