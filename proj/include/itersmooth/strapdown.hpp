#pragma once

// Nine-state strapdown mechanization: position and velocity in a z-down
// navigation frame plus ZYX Euler angles, advanced by one forward-Euler step
// per IMU sample.

#include <Eigen/Dense>

#include <cmath>

#include "itersmooth/geo3d.hpp"

namespace itersmooth {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat96 = Eigen::Matrix<double, 9, 6>;

inline constexpr double kStandardGravity = 9.80665;

struct NavState {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    EulerAngles euler;

    /// Stacked as (p, v, roll, pitch, yaw).
    Vec9 vector() const {
        Vec9 x;
        x << p, v, euler.vector();
        return x;
    }

    static NavState from_vector(const Vec9& x) {
        return {x.segment<3>(0), x.segment<3>(3), EulerAngles::from_vector(x.segment<3>(6))};
    }

    bool finite() const { return p.allFinite() && v.allFinite() && euler.finite(); }

    friend bool operator==(const NavState& a, const NavState& b) {
        return a.p == b.p && a.v == b.v && a.euler == b.euler;
    }
};

struct ImuSample {
    double t = 0.0;
    Vec3 f_b = Vec3::Zero();  ///< specific force, m/s^2
    Vec3 w_b = Vec3::Zero();  ///< angular rate, rad/s

    bool finite() const { return std::isfinite(t) && f_b.allFinite() && w_b.allFinite(); }
};

struct GravityModel {
    Vec3 g_n{0.0, 0.0, kStandardGravity};
};

/// Which rotation maps gyro noise into the attitude rows of G.
enum class GyroNoiseMapping {
    EulerRate,  ///< E^n_b, consistent with how gyro signals enter the model
    Dcm,        ///< C^n_b, the literal published form
};

struct StrapdownModel {
    GravityModel gravity;
    double gimbal_eps = kDefaultGimbalEps;
    GyroNoiseMapping gyro_mapping = GyroNoiseMapping::EulerRate;
};

namespace detail {

inline void check_step(const NavState& x, const ImuSample& u, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("strapdown: dt must be finite and > 0");
    if (!u.finite()) throw InvalidArgument("strapdown: non-finite IMU sample");
    if (!x.finite()) throw InvalidArgument("strapdown: non-finite state");
}

}  // namespace detail

inline NavState predict(const NavState& x, const ImuSample& u, double dt,
                        const StrapdownModel& model = {}) {
    detail::check_step(x, u, dt);
    const Mat3 c = dcm_body_to_nav(x.euler);
    const Mat3 e = euler_rate_matrix(x.euler, model.gimbal_eps);
    NavState out;
    out.p = x.p + x.v * dt;
    out.v = x.v + (c * u.f_b + model.gravity.g_n) * dt;
    out.euler = wrap_angles(EulerAngles::from_vector(x.euler.vector() + e * u.w_b * dt));
    return out;
}

/// Analytic Jacobian of predict() with respect to the 9-state.
inline Mat9 jacobian(const NavState& x, const ImuSample& u, double dt,
                     const StrapdownModel& model = {}) {
    detail::check_step(x, u, dt);
    const auto dc = dcm_partials(x.euler);
    const auto de = euler_rate_partials(x.euler, model.gimbal_eps);

    Mat9 f = Mat9::Identity();
    f.block<3, 3>(0, 3) = Mat3::Identity() * dt;
    for (int k = 0; k < 3; ++k) {
        f.block<3, 1>(3, 6 + k) = dc[k] * u.f_b * dt;
        f.block<3, 1>(6, 6 + k) += de[k] * u.w_b * dt;
    }
    return f;
}

/// Process-noise mapping G (9x6): accelerometer channels into velocity rows,
/// gyro channels into attitude rows. Position rows are zero.
inline Mat96 noise_mapping(const NavState& x, const StrapdownModel& model = {}) {
    Mat96 g = Mat96::Zero();
    g.block<3, 3>(3, 0) = dcm_body_to_nav(x.euler);
    g.block<3, 3>(6, 3) = model.gyro_mapping == GyroNoiseMapping::EulerRate
                              ? euler_rate_matrix(x.euler, model.gimbal_eps)
                              : dcm_body_to_nav(x.euler);
    if (model.gyro_mapping == GyroNoiseMapping::Dcm) {
        // still refuse states where the Euler kinematics themselves are singular
        detail::require_clear_of_gimbal_lock(x.euler, model.gimbal_eps);
    }
    return g;
}

}  // namespace itersmooth
