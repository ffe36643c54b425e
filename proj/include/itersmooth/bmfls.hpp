#pragma once

// Biswas-Mahalanabis fixed-lag smoother.
//
// The filter state is the stack of the N+1 most recent navigation states,
// newest first. Pose measurements observe the newest state; the oldest state
// is the fixed-lag smoothed estimate. Because the augmented transition is
// [F 0 ... 0; I 0 ... 0; 0 I ... 0; ...], the window is stored as a ring of
// physical slots and propagation only rewrites one block row/column of the
// joint covariance instead of forming the full product.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <vector>

#include "itersmooth/errors.hpp"
#include "itersmooth/geo3d.hpp"
#include "itersmooth/strapdown.hpp"

namespace itersmooth {

struct PoseMeasurement {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    EulerAngles euler;
    int marker_id = 0;

    /// Stacked as (x, y, z, roll, pitch, yaw), the row order of H.
    Vec6 vector() const {
        Vec6 z;
        z << position, euler.vector();
        return z;
    }
};

struct NoiseConfig {
    Vec6 q_sigmas = Vec6::Constant(1e-3);  ///< accel x,y,z (m/s^2/sqrt(Hz)); gyro x,y,z (rad/s/sqrt(Hz))
    Vec6 r_sigmas = Vec6::Constant(1e-2);  ///< position x,y,z (m); roll, pitch, yaw (rad)

    Mat6 q() const { return q_sigmas.array().square().matrix().asDiagonal(); }
    Mat6 r() const { return r_sigmas.array().square().matrix().asDiagonal(); }

    void validate() const {
        if (!(q_sigmas.array() > 0.0).all() || !q_sigmas.allFinite() ||
            !(r_sigmas.array() > 0.0).all() || !r_sigmas.allFinite())
            throw InvalidArgument("NoiseConfig: all sigmas must be finite and > 0");
    }
};

/// State-vector rows observed by a pose measurement: position and Euler angles.
inline constexpr std::array<int, 6> kObservedRows{0, 1, 2, 6, 7, 8};

/// The 6x9 pose selector matrix.
inline Eigen::Matrix<double, 6, 9> measurement_matrix() {
    Eigen::Matrix<double, 6, 9> h = Eigen::Matrix<double, 6, 9>::Zero();
    for (int i = 0; i < 6; ++i) h(i, kObservedRows[static_cast<std::size_t>(i)]) = 1.0;
    return h;
}

struct Innovation {
    Vec6 e = Vec6::Zero();  ///< z - Hx, angle components wrapped
    Mat6 s = Mat6::Identity();
};

namespace detail {

inline bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol = 1e-9) {
    if (m.rows() != m.cols() || !m.allFinite()) return false;
    if (((m - m.transpose()).array().abs() > tol).any()) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                      Eigen::EigenvaluesOnly);
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace detail

class LagWindow {
public:
    /// Seeds a window of lag+1 copies of x0 with P0 on every diagonal block.
    static LagWindow init(const NavState& x0, double t0, const Mat9& p0, int lag,
                          const NoiseConfig& noise, const StrapdownModel& model = {}) {
        if (lag < 0) throw InvalidArgument("LagWindow: lag must be >= 0");
        if (!x0.finite() || !std::isfinite(t0)) throw InvalidArgument("LagWindow: non-finite initial state");
        if (!detail::is_symmetric_psd(p0)) throw InvalidArgument("LagWindow: P0 must be symmetric PSD");
        noise.validate();

        LagWindow w;
        w.lag_ = lag;
        w.noise_ = noise;
        w.model_ = model;
        const auto slots = static_cast<std::size_t>(lag + 1);
        w.states_.assign(slots, wrap_state(x0));
        w.times_.assign(slots, t0);
        w.p_ = Eigen::MatrixXd::Zero(9 * (lag + 1), 9 * (lag + 1));
        for (int s = 0; s <= lag; ++s) w.p_.block<9, 9>(9 * s, 9 * s) = p0;
        return w;
    }

    int lag() const { return lag_; }
    int size() const { return lag_ + 1; }
    std::size_t propagations() const { return propagations_; }

    /// True once every window slot holds a distinct propagated epoch.
    bool ready() const { return propagations_ >= static_cast<std::size_t>(lag_); }

    /// State at logical index i (0 = newest, lag = oldest).
    const NavState& state(int i) const { return states_[slot(i)]; }
    double time(int i) const { return times_[slot(i)]; }

    /// 9x9 covariance block between logical indices i and j.
    Mat9 block(int i, int j) const { return p_.block<9, 9>(9 * static_cast<int>(slot(i)), 9 * static_cast<int>(slot(j))); }

    /// Joint covariance in logical (newest-first) order.
    Eigen::MatrixXd covariance() const {
        const int n = size();
        Eigen::MatrixXd out(9 * n, 9 * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out.block<9, 9>(9 * i, 9 * j) = block(i, j);
        return out;
    }

    /// Raw slot-ordered covariance; a symmetric permutation of covariance().
    const Eigen::MatrixXd& raw_covariance() const { return p_; }

    const NoiseConfig& noise() const { return noise_; }
    const StrapdownModel& model() const { return model_; }

    /// Advances the newest state by one IMU step and shifts the window.
    void propagate(const ImuSample& u, double dt) {
        const std::size_t h = head_;
        const NavState& x = states_[h];
        const Mat9 f = jacobian(x, u, dt, model_);
        const Mat96 g = noise_mapping(x, model_);
        const NavState next = predict(x, u, dt, model_);

        const auto n_slots = static_cast<std::size_t>(size());
        const std::size_t nh = (h + n_slots - 1) % n_slots;  // the dropped oldest slot
        const int rh = 9 * static_cast<int>(h);
        const int rn = 9 * static_cast<int>(nh);

        Eigen::MatrixXd row = f * p_.middleRows(rh, 9);
        Mat9 pnn = row.middleCols(rh, 9) * f.transpose() + g * noise_.q() * g.transpose() * dt;
        pnn = 0.5 * (pnn + pnn.transpose()).eval();
        row.middleCols(rn, 9) = pnn;
        p_.middleRows(rn, 9) = row;
        p_.middleCols(rn, 9) = row.transpose();

        states_[nh] = next;
        times_[nh] = times_[h] + dt;
        head_ = nh;
        ++propagations_;
    }

    /// Residual of z against the newest state, with its covariance HPH' + R.
    Innovation innovation(const PoseMeasurement& z) const {
        const NavState& x = states_[head_];
        Innovation inn;
        inn.e.head<3>() = z.position - x.p;
        inn.e.tail<3>() = wrap_angles(Vec3(z.euler.vector() - x.euler.vector()));
        const int r0 = 9 * static_cast<int>(head_);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                inn.s(i, j) = p_(r0 + kObservedRows[static_cast<std::size_t>(i)],
                                 r0 + kObservedRows[static_cast<std::size_t>(j)]);
        inn.s += noise_.r();
        inn.s = 0.5 * (inn.s + inn.s.transpose()).eval();
        return inn;
    }

    /// Fuses an accepted measurement into every state of the window.
    void update(const Innovation& inn) {
        const Eigen::Index n = p_.rows();
        const int r0 = 9 * static_cast<int>(head_);
        Eigen::MatrixXd pht(n, 6);
        for (int j = 0; j < 6; ++j) pht.col(j) = p_.col(r0 + kObservedRows[static_cast<std::size_t>(j)]);

        Eigen::LLT<Mat6> llt(inn.s);
        if (llt.info() != Eigen::Success)
            throw NumericalDegeneracyError("update: innovation covariance is not positive definite");
        // K = P H' S^-1
        const Eigen::MatrixXd k = llt.solve(pht.transpose()).transpose();

        const Eigen::VectorXd dx = k * inn.e;
        for (std::size_t s = 0; s < states_.size(); ++s) {
            Vec9 xs = states_[s].vector() + dx.segment<9>(9 * static_cast<Eigen::Index>(s));
            states_[s] = wrap_state(NavState::from_vector(xs));
        }
        p_.noalias() -= k * pht.transpose();
        p_ = 0.5 * (p_ + p_.transpose()).eval();
    }

    /// The fixed-lag smoothed estimate: the oldest state in the window.
    NavState smoothed_output() const {
        if (!ready()) throw NotReadyError("smoothed_output: lag window still warming up");
        return state(lag_);
    }

private:
    LagWindow() = default;

    std::size_t slot(int i) const {
        if (i < 0 || i > lag_) throw InvalidArgument("LagWindow: index out of range");
        return (head_ + static_cast<std::size_t>(i)) % static_cast<std::size_t>(size());
    }

    static NavState wrap_state(NavState x) {
        x.euler = wrap_angles(x.euler);
        return x;
    }

    int lag_ = 0;
    NoiseConfig noise_;
    StrapdownModel model_;
    std::vector<NavState> states_;
    std::vector<double> times_;
    Eigen::MatrixXd p_;
    std::size_t head_ = 0;
    std::size_t propagations_ = 0;
};

}  // namespace itersmooth
