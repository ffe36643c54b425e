#pragma once

// Synthetic hover benchmark: a smooth sinusoidal trajectory, IMU samples
// obtained by inverting the strapdown step, and pose measurements with
// burst-wise offset outliers that imitate fiducial-marker confusion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "itersmooth/errors.hpp"
#include "itersmooth/geo3d.hpp"
#include "itersmooth/iterative.hpp"
#include "itersmooth/strapdown.hpp"

namespace itersmooth {

struct ScenarioConfig {
    double duration = 120.0;  ///< s
    double imu_rate = 252.0;  ///< Hz
    double cam_rate = 26.0;   ///< Hz

    // hover motion: p(t) = center + amp * sin(2 pi freq t + phase), Euler likewise
    Vec3 hover_center = Vec3(0.0, 0.0, 2.0);
    Vec3 hover_amp = Vec3(0.3, 0.2, 0.1);
    Vec3 hover_freq = Vec3(0.05, 0.07, 0.11);
    Vec3 euler_center = Vec3(0.0, 0.0, 0.5);
    Vec3 euler_amp = Vec3(0.03, 0.03, 0.15);
    Vec3 euler_freq = Vec3(0.13, 0.11, 0.04);

    Vec6 imu_noise = (Vec6() << 0.05, 0.05, 0.05, 0.005, 0.005, 0.005).finished();    ///< per-sample std
    Vec6 meas_noise = (Vec6() << 0.02, 0.02, 0.02, 0.02, 0.02, 0.02).finished();  ///< m, rad

    double outlier_rate = 0.0;
    std::vector<Vec3> outlier_offsets{Vec3(0.5, 0.0, 0.0), Vec3(1.0, 0.0, 0.0)};
    std::vector<Vec3> outlier_euler_offsets;  ///< empty, or one per position offset
    double burst_mean = 10.0;  ///< mean burst length in camera frames
    std::size_t burst_max = 30;  ///< bursts are truncated to this many frames

    std::uint64_t rng_seed = 1;

    void validate() const {
        if (!(duration > 0.0) || !(imu_rate > 0.0) || !(cam_rate > 0.0))
            throw InvalidArgument("ScenarioConfig: duration and rates must be > 0");
        if (cam_rate > imu_rate) throw InvalidArgument("ScenarioConfig: cam_rate must not exceed imu_rate");
        if (!(outlier_rate >= 0.0 && outlier_rate < 1.0))
            throw InvalidArgument("ScenarioConfig: outlier_rate must lie in [0, 1)");
        if (outlier_rate > 0.0 && outlier_offsets.empty())
            throw InvalidArgument("ScenarioConfig: outlier_rate > 0 needs at least one offset");
        if (!outlier_euler_offsets.empty() && outlier_euler_offsets.size() != outlier_offsets.size())
            throw InvalidArgument("ScenarioConfig: euler offsets must pair with position offsets");
        if (!(burst_mean >= 1.0)) throw InvalidArgument("ScenarioConfig: burst_mean must be >= 1");
        if (burst_max < 1) throw InvalidArgument("ScenarioConfig: burst_max must be >= 1");
        if ((imu_noise.array() < 0.0).any() || (meas_noise.array() < 0.0).any())
            throw InvalidArgument("ScenarioConfig: noise std-devs must be >= 0");
    }
};

struct LabeledDataset {
    Dataset data;  ///< ground_truth and true_labels are always set
    std::vector<Vec3> planted_offsets;        ///< zero for inliers
    std::vector<Vec3> planted_euler_offsets;  ///< zero for inliers
};

namespace detail {

enum class Stream : std::uint64_t { Trajectory = 1, Imu = 2, Measurements = 3 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    return std::mt19937_64(seq);
}

struct HoverPhases {
    Vec3 pos, euler;
};

inline HoverPhases hover_phases(const ScenarioConfig& sc) {
    auto rng = make_rng(sc.rng_seed, Stream::Trajectory);
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    HoverPhases ph;
    for (int i = 0; i < 3; ++i) ph.pos[i] = u(rng);
    for (int i = 0; i < 3; ++i) ph.euler[i] = u(rng);
    return ph;
}

inline NavState hover_state(const ScenarioConfig& sc, const HoverPhases& ph, double t) {
    NavState x;
    for (int i = 0; i < 3; ++i) {
        const double w = 2.0 * kPi * sc.hover_freq[i];
        x.p[i] = sc.hover_center[i] + sc.hover_amp[i] * std::sin(w * t + ph.pos[i]);
        x.v[i] = sc.hover_amp[i] * w * std::cos(w * t + ph.pos[i]);
    }
    Vec3 e;
    for (int i = 0; i < 3; ++i)
        e[i] = sc.euler_center[i] + sc.euler_amp[i] * std::sin(2.0 * kPi * sc.euler_freq[i] * t + ph.euler[i]);
    x.euler = wrap_angles(EulerAngles::from_vector(e));
    return x;
}

inline std::size_t sample_count(double duration, double rate) {
    return static_cast<std::size_t>(std::floor(duration * rate + 1e-9)) + 1;
}

/// Linear interpolation between trajectory samples; Euler differences are wrapped.
inline NavState interpolate(const std::vector<StampedState>& traj, double t) {
    auto it = std::lower_bound(traj.begin(), traj.end(), t,
                               [](const StampedState& s, double v) { return s.t < v; });
    if (it == traj.begin()) return traj.front().x;
    if (it == traj.end()) return traj.back().x;
    const StampedState& b = *it;
    const StampedState& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    NavState x;
    x.p = a.x.p + w * (b.x.p - a.x.p);
    x.v = a.x.v + w * (b.x.v - a.x.v);
    const Vec3 de = wrap_angles(Vec3(b.x.euler.vector() - a.x.euler.vector()));
    x.euler = wrap_angles(EulerAngles::from_vector(a.x.euler.vector() + w * de));
    return x;
}

}  // namespace detail

/// Hover trajectory sampled at the IMU rate, velocity from the analytic derivative.
inline std::vector<StampedState> gen_trajectory(const ScenarioConfig& sc) {
    sc.validate();
    const auto ph = detail::hover_phases(sc);
    const std::size_t n = detail::sample_count(sc.duration, sc.imu_rate);
    std::vector<StampedState> traj(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / sc.imu_rate;
        traj[k] = {t, detail::hover_state(sc, ph, t)};
    }
    return traj;
}

/// IMU samples that reproduce the trajectory's velocity and attitude under
/// predict(): sample k drives the step from epoch k-1 to k. Sample 0 only
/// carries the start time and repeats sample 1's values.
inline std::vector<ImuSample> gen_imu(const std::vector<StampedState>& traj, const ScenarioConfig& sc,
                                      const StrapdownModel& model = {}) {
    sc.validate();
    std::vector<ImuSample> imu(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) imu[k].t = traj[k].t;

    for (std::size_t k = 1; k < traj.size(); ++k) {
        const NavState& a = traj[k - 1].x;
        const NavState& b = traj[k].x;
        const double dt = traj[k].t - traj[k - 1].t;
        detail::require_clear_of_gimbal_lock(a.euler, model.gimbal_eps);
        const Vec3 accel = (b.v - a.v) / dt;
        const Vec3 euler_rate = wrap_angles(Vec3(b.euler.vector() - a.euler.vector())) / dt;
        imu[k].f_b = dcm_body_to_nav(a.euler).transpose() * (accel - model.gravity.g_n);
        imu[k].w_b = euler_rate_matrix(a.euler, model.gimbal_eps).inverse() * euler_rate;
    }
    if (traj.size() > 1) {
        imu[0].f_b = imu[1].f_b;
        imu[0].w_b = imu[1].w_b;
    } else if (!traj.empty()) {
        imu[0].f_b = dcm_body_to_nav(traj[0].x.euler).transpose() * (-model.gravity.g_n);
    }

    auto rng = detail::make_rng(sc.rng_seed, detail::Stream::Imu);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& u : imu) {
        for (int i = 0; i < 3; ++i) u.f_b[i] += sc.imu_noise[i] * n01(rng);
        for (int i = 0; i < 3; ++i) u.w_b[i] += sc.imu_noise[3 + i] * n01(rng);
    }
    return imu;
}

/// Pose measurements at the camera rate with planted burst outliers.
///
/// The outlier count is binomial in the number of frames; it is split into
/// bursts with geometric lengths (mean burst_mean, truncated at burst_max) and the bursts are placed
/// among the inlier frames by a uniform shuffle. Each burst carries one offset
/// drawn uniformly from outlier_offsets.
inline LabeledDataset gen_measurements(const std::vector<StampedState>& traj, const ScenarioConfig& sc) {
    sc.validate();
    LabeledDataset out;
    if (traj.empty()) return out;

    auto rng = detail::make_rng(sc.rng_seed, detail::Stream::Measurements);
    std::normal_distribution<double> n01(0.0, 1.0);

    const double t_end = traj.back().t;
    std::vector<double> times;
    for (std::size_t j = 0;; ++j) {
        const double t = traj.front().t + static_cast<double>(j) / sc.cam_rate;
        if (t > t_end) break;
        times.push_back(t);
    }
    const std::size_t n = times.size();

    std::vector<int> burst_of(n, -1);
    std::vector<std::size_t> burst_offset;
    if (sc.outlier_rate > 0.0 && n > 0) {
        std::binomial_distribution<std::size_t> count_dist(n, sc.outlier_rate);
        const std::size_t m = count_dist(rng);
        std::geometric_distribution<std::size_t> extra(1.0 / sc.burst_mean);
        std::uniform_int_distribution<std::size_t> pick(0, sc.outlier_offsets.size() - 1);

        std::vector<std::size_t> lengths;
        for (std::size_t total = 0; total < m;) {
            const std::size_t len = std::min({1 + extra(rng), sc.burst_max, m - total});
            lengths.push_back(len);
            burst_offset.push_back(pick(rng));
            total += len;
        }
        // tokens: >= 0 is a burst id, -1 a single inlier frame
        std::vector<int> tokens(n - m, -1);
        for (std::size_t b = 0; b < lengths.size(); ++b) tokens.push_back(static_cast<int>(b));
        std::shuffle(tokens.begin(), tokens.end(), rng);
        std::size_t j = 0;
        for (int tok : tokens) {
            if (tok < 0) {
                ++j;
                continue;
            }
            for (std::size_t r = 0; r < lengths[static_cast<std::size_t>(tok)]; ++r) burst_of[j++] = tok;
        }
    }

    Dataset& ds = out.data;
    ds.meas.resize(n);
    ds.true_labels = std::vector<Label>(n, Label::Inlier);
    out.planted_offsets.assign(n, Vec3::Zero());
    out.planted_euler_offsets.assign(n, Vec3::Zero());
    for (std::size_t j = 0; j < n; ++j) {
        const NavState truth = detail::interpolate(traj, times[j]);
        PoseMeasurement& z = ds.meas[j];
        z.t = times[j];
        Vec6 noise;
        for (int i = 0; i < 6; ++i) noise[i] = sc.meas_noise[i] * n01(rng);
        z.position = truth.p + noise.head<3>();
        Vec3 e = truth.euler.vector() + noise.tail<3>();
        if (burst_of[j] >= 0) {
            const std::size_t o = burst_offset[static_cast<std::size_t>(burst_of[j])];
            out.planted_offsets[j] = sc.outlier_offsets[o];
            z.position += sc.outlier_offsets[o];
            if (!sc.outlier_euler_offsets.empty()) {
                out.planted_euler_offsets[j] = sc.outlier_euler_offsets[o];
                e += sc.outlier_euler_offsets[o];
            }
            (*ds.true_labels)[j] = Label::Outlier;
            z.marker_id = static_cast<int>(o) + 1;
        }
        z.euler = wrap_angles(EulerAngles::from_vector(e));
    }
    return out;
}

/// Full benchmark dataset: trajectory, IMU and labeled measurements.
inline LabeledDataset generate_dataset(const ScenarioConfig& sc, const StrapdownModel& model = {}) {
    const auto traj = gen_trajectory(sc);
    LabeledDataset out = gen_measurements(traj, sc);
    out.data.imu = gen_imu(traj, sc, model);
    out.data.ground_truth = traj;
    return out;
}

struct Metrics {
    std::vector<double> pos_rmse;    ///< m, per pass
    std::vector<double> euler_rmse;  ///< rad, per pass
    std::vector<double> precision;   ///< outlier = positive class, per pass
    std::vector<double> recall;
};

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    /// 0/0 cases count as perfect: no alarms raised, or nothing to find.
    double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
};

inline Confusion confusion(const std::vector<Label>& predicted, const std::vector<Label>& truth) {
    if (predicted.size() != truth.size()) throw InvalidArgument("confusion: label count mismatch");
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == Label::Outlier, t = truth[i] == Label::Outlier;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

struct TrajectoryErrors {
    double pos_rmse = 0.0;
    double euler_rmse = 0.0;
};

/// RMSE of a trajectory against ground truth matched by nearest timestamp.
inline TrajectoryErrors trajectory_errors(const std::vector<TrajectoryPoint>& traj,
                                          const std::vector<StampedState>& truth) {
    if (truth.empty()) throw InvalidArgument("trajectory_errors: empty ground truth");
    if (traj.empty()) return {};
    double sp = 0.0, se = 0.0;
    for (const auto& pt : traj) {
        auto it = std::lower_bound(truth.begin(), truth.end(), pt.t,
                                   [](const StampedState& s, double v) { return s.t < v; });
        if (it == truth.end()) --it;
        if (it != truth.begin() && std::abs((it - 1)->t - pt.t) < std::abs(it->t - pt.t)) --it;
        sp += (pt.x.p - it->x.p).squaredNorm();
        se += wrap_angles(Vec3(pt.x.euler.vector() - it->x.euler.vector())).squaredNorm();
    }
    const double n = static_cast<double>(traj.size());
    return {std::sqrt(sp / n), std::sqrt(se / n)};
}

inline std::vector<Label> labels_of(const PassResult& pass) {
    std::vector<Label> out(pass.records.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pass.records[i].c;
    return out;
}

/// Per-pass trajectory RMSE and outlier precision/recall. Precision and recall
/// are left empty when the dataset has no true labels.
inline Metrics evaluate(const IterationReport& report, const Dataset& ds) {
    if (!ds.ground_truth || ds.ground_truth->empty())
        throw InvalidArgument("evaluate: dataset has no ground truth");
    Metrics m;
    for (const auto& pass : report.passes) {
        const auto err = trajectory_errors(pass.trajectory, *ds.ground_truth);
        m.pos_rmse.push_back(err.pos_rmse);
        m.euler_rmse.push_back(err.euler_rmse);
        if (ds.true_labels) {
            const Confusion c = confusion(labels_of(pass), *ds.true_labels);
            m.precision.push_back(c.precision());
            m.recall.push_back(c.recall());
        }
    }
    return m;
}

}  // namespace itersmooth
