#pragma once

// Iterative smoothing with outlier re-classification.
//
// Each pass is a full forward sweep of the fixed-lag smoother over a recorded
// dataset. Every measurement is gated against the predicted window, but only
// the measurements in the pass's fuse set are applied. The next pass fuses the
// inliers of the previous one, until the inlier set stops changing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "itersmooth/bmfls.hpp"
#include "itersmooth/errors.hpp"
#include "itersmooth/gating.hpp"
#include "itersmooth/strapdown.hpp"

namespace itersmooth {

struct StampedState {
    double t = 0.0;
    NavState x;
};

struct TrajectoryPoint {
    double t = 0.0;
    NavState x;
    Vec9 var = Vec9::Zero();  ///< diagonal of the state covariance

    friend bool operator==(const TrajectoryPoint& a, const TrajectoryPoint& b) {
        return a.t == b.t && a.x == b.x && a.var == b.var;
    }
};

struct Dataset {
    std::vector<ImuSample> imu;
    std::vector<PoseMeasurement> meas;
    std::optional<std::vector<StampedState>> ground_truth;
    std::optional<std::vector<Label>> true_labels;

    void validate() const {
        if (imu.empty()) throw InvalidArgument("Dataset: IMU stream is empty");
        for (std::size_t k = 1; k < imu.size(); ++k)
            if (!(imu[k].t > imu[k - 1].t))
                throw InvalidArgument("Dataset: IMU timestamps not strictly increasing at sample " +
                                      std::to_string(k));
        for (std::size_t j = 0; j < meas.size(); ++j) {
            if (j > 0 && meas[j].t < meas[j - 1].t)
                throw InvalidArgument("Dataset: measurements not time-sorted at index " + std::to_string(j));
            if (meas[j].t < imu.front().t || meas[j].t > imu.back().t)
                throw InvalidArgument("Dataset: measurement " + std::to_string(j) +
                                      " lies outside the IMU time span");
        }
        if (true_labels && true_labels->size() != meas.size())
            throw InvalidArgument("Dataset: true_labels size does not match measurements");
    }
};

/// Everything needed to run the estimator on a dataset.
struct SmootherConfig {
    NoiseConfig noise;
    StrapdownModel model;
    int lag = 26;
    GateConfig gate;
    Vec9 p0_sigmas = (Vec9() << 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.05, 0.05, 0.05).finished();
    int max_iterations = 10;
    double max_pos_var = 100.0;  ///< m^2, trace of the newest position block
    int max_consec_rejections = 50;
    bool monotone_removal = false;

    Mat9 p0() const { return p0_sigmas.array().square().matrix().asDiagonal(); }
};

/// Sorted, duplicate-free measurement indices.
using IndexSet = std::vector<std::size_t>;

inline IndexSet all_indices(std::size_t n) {
    IndexSet s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = i;
    return s;
}

struct DivergenceInfo {
    int pass = 0;
    std::size_t epoch = 0;  ///< IMU sample index at which the guard tripped
    double t = 0.0;
    std::string reason;
};

class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(DivergenceInfo info)
        : std::runtime_error("divergence in pass " + std::to_string(info.pass) + " at t=" +
                             std::to_string(info.t) + ": " + info.reason),
          info_(std::move(info)) {}

    const DivergenceInfo& info() const { return info_; }

private:
    DivergenceInfo info_;
};

struct GuardStatus {
    bool tripped = false;
    std::string reason;
};

/// Watches a running pass for covariance blow-up and long rejection streaks.
class DivergenceGuard {
public:
    DivergenceGuard(double max_pos_var, int max_consec_rejections)
        : max_pos_var_(max_pos_var), max_consec_(max_consec_rejections) {}

    void observe(Label c) { consec_ = c == Label::Outlier ? consec_ + 1 : 0; }

    int consecutive_rejections() const { return consec_; }

    GuardStatus evaluate(const LagWindow& w) const {
        const double pos_var = w.block(0, 0).block<3, 3>(0, 0).trace();
        if (!(pos_var <= max_pos_var_))
            return {true, "position covariance trace " + std::to_string(pos_var) + " m^2 exceeds " +
                              std::to_string(max_pos_var_) + " m^2"};
        if (consec_ >= max_consec_)
            return {true, std::to_string(consec_) + " consecutive measurements rejected"};
        return {};
    }

private:
    double max_pos_var_;
    int max_consec_;
    int consec_ = 0;
};

struct PassResult {
    std::vector<TrajectoryPoint> trajectory;
    std::vector<GatingRecord> records;
    IndexSet inlier_set;
};

struct IterationReport {
    std::vector<PassResult> passes;
    bool converged = false;
    int iterations_used = 0;
    std::optional<DivergenceInfo> divergence;
};

namespace detail {

/// For each IMU epoch, the measurements assigned to it (nearest epoch, ties to the earlier one).
inline std::vector<std::vector<std::size_t>> assign_to_epochs(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_epoch(ds.imu.size());
    for (std::size_t j = 0; j < ds.meas.size(); ++j) {
        const double t = ds.meas[j].t;
        auto it = std::lower_bound(ds.imu.begin(), ds.imu.end(), t,
                                   [](const ImuSample& u, double v) { return u.t < v; });
        std::size_t k = static_cast<std::size_t>(it - ds.imu.begin());
        if (k == ds.imu.size()) k = ds.imu.size() - 1;
        if (k > 0 && std::abs(ds.imu[k - 1].t - t) <= std::abs(ds.imu[k].t - t)) --k;
        by_epoch[k].push_back(j);
    }
    return by_epoch;
}

inline TrajectoryPoint window_point(const LagWindow& w, int i) {
    return {w.time(i), w.state(i), w.block(i, i).diagonal()};
}

}  // namespace detail

/// Initial state: first pose measurement with zero velocity, or all zeros when
/// there are no measurements.
inline NavState initial_state(const Dataset& ds) {
    NavState x0;
    if (!ds.meas.empty()) {
        x0.p = ds.meas.front().position;
        x0.euler = wrap_angles(ds.meas.front().euler);
    }
    return x0;
}

/// One forward smoothing sweep over the dataset.
inline PassResult run_pass(const Dataset& ds, const IndexSet& fuse_set, const SmootherConfig& cfg,
                           int pass_number = 1) {
    ds.validate();
    std::vector<bool> fuse(ds.meas.size(), false);
    for (std::size_t j : fuse_set) {
        if (j >= ds.meas.size()) throw InvalidArgument("run_pass: fuse index out of range");
        fuse[j] = true;
    }

    const auto by_epoch = detail::assign_to_epochs(ds);
    LagWindow w = LagWindow::init(initial_state(ds), ds.imu.front().t, cfg.p0(), cfg.lag, cfg.noise,
                                  cfg.model);
    DivergenceGuard guard(cfg.max_pos_var, cfg.max_consec_rejections);

    PassResult out;
    out.trajectory.reserve(ds.imu.size());
    out.records.resize(ds.meas.size());

    for (std::size_t k = 0; k < ds.imu.size(); ++k) {
        if (k > 0) w.propagate(ds.imu[k], ds.imu[k].t - ds.imu[k - 1].t);

        for (std::size_t j : by_epoch[k]) {
            const Innovation inn = w.innovation(ds.meas[j]);
            const double d = mahalanobis_sq(inn);
            const Label c = classify(d, cfg.gate);
            out.records[j] = {j, ds.meas[j].t, d, c, pass_number};
            if (c == Label::Inlier) out.inlier_set.push_back(j);
            guard.observe(c);
            if (fuse[j]) w.update(inn);
        }
        if (!by_epoch[k].empty()) {
            if (auto st = guard.evaluate(w); st.tripped)
                throw DivergenceError({pass_number, k, ds.imu[k].t, st.reason});
        }

        if (w.ready()) out.trajectory.push_back(detail::window_point(w, w.lag()));
    }

    // Flush the states still inside the window, oldest first.
    const int newest_emitted = w.ready() ? w.lag() : static_cast<int>(w.propagations()) + 1;
    for (int i = newest_emitted - 1; i >= 0; --i) out.trajectory.push_back(detail::window_point(w, i));

    std::sort(out.inlier_set.begin(), out.inlier_set.end());
    return out;
}

/// Repeats smoothing passes until the inlier set reaches a fixed point.
inline IterationReport iterate(const Dataset& ds, const SmootherConfig& cfg) {
    if (cfg.max_iterations < 1) throw InvalidArgument("iterate: max_iterations must be >= 1");
    IterationReport report;
    IndexSet fuse_set = all_indices(ds.meas.size());

    for (int pass = 1; pass <= cfg.max_iterations; ++pass) {
        try {
            report.passes.push_back(run_pass(ds, fuse_set, cfg, pass));
        } catch (const DivergenceError& e) {
            report.divergence = e.info();
            break;
        }
        report.iterations_used = pass;

        const IndexSet& inliers = report.passes.back().inlier_set;
        if (pass > 1 && inliers == report.passes[report.passes.size() - 2].inlier_set) {
            report.converged = true;
            break;
        }
        if (cfg.monotone_removal) {
            IndexSet next;
            std::set_intersection(fuse_set.begin(), fuse_set.end(), inliers.begin(), inliers.end(),
                                  std::back_inserter(next));
            fuse_set = std::move(next);
        } else {
            fuse_set = inliers;
        }
    }
    return report;
}

}  // namespace itersmooth
