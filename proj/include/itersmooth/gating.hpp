#pragma once

// Mahalanobis distance and chi-squared inlier/outlier classification.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string_view>

#include "itersmooth/bmfls.hpp"
#include "itersmooth/errors.hpp"

namespace itersmooth {

enum class Label { Inlier, Outlier };

inline std::string_view to_string(Label c) { return c == Label::Inlier ? "inlier" : "outlier"; }

struct GatingRecord {
    std::size_t meas_index = 0;
    double t = 0.0;
    double d = 0.0;
    Label c = Label::Inlier;
    int iteration = 0;
};

/// Squared Mahalanobis distance e' S^-1 e via a Cholesky solve.
inline double mahalanobis_sq(const Innovation& inn) {
    Eigen::LLT<Mat6> llt(inn.s);
    if (llt.info() != Eigen::Success)
        throw NumericalDegeneracyError("mahalanobis_sq: innovation covariance is not positive definite");
    // ||L^-1 e||^2 keeps the result non-negative by construction
    const Vec6 w = llt.matrixL().solve(inn.e);
    return w.squaredNorm();
}

namespace detail {

// Regularized lower incomplete gamma P(a, x): series below a+1, Lentz
// continued fraction for Q(a, x) above.
inline double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    constexpr double kEps = 1e-16;
    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term, ap = a;
        for (int n = 0; n < 10000; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * kEps) break;
        }
        return sum * std::exp(log_prefix);
    }
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return 1.0 - std::exp(log_prefix) * h;
}

inline double chi2_cdf(double x, int dof) { return gamma_p(0.5 * dof, 0.5 * x); }

// Standard normal quantile (Acklam's rational approximation, ~1e-9 relative).
inline double normal_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double lo = 0.02425, hi = 1.0 - lo;
    if (p < lo) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > hi) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// p-quantile of the chi-squared distribution with `dof` degrees of freedom.
///
/// Wilson-Hilferty gives the starting point; the bracket around it is widened
/// until it contains the root and then bisected on the incomplete gamma CDF.
inline double chi2_threshold(int dof, double p) {
    if (dof < 1) throw InvalidArgument("chi2_threshold: dof must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("chi2_threshold: p must lie in (0, 1)");

    const double k = dof;
    const double z = detail::normal_quantile(p);
    const double s = 2.0 / (9.0 * k);
    double guess = k * std::pow(std::max(1.0 - s + z * std::sqrt(s), 1e-3), 3.0);
    guess = std::max(guess, 1e-12);

    double lo = guess * 0.5, hi = guess * 2.0;
    while (lo > 1e-300 && detail::chi2_cdf(lo, dof) > p) lo *= 0.5;
    while (detail::chi2_cdf(hi, dof) < p) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (detail::chi2_cdf(mid, dof) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct GateConfig {
    int dof = 6;
    double p = 0.95;
    double threshold = chi2_threshold(6, 0.95);

    /// p == 1 is accepted and yields an infinite threshold (a gate that never rejects).
    static GateConfig make(int dof, double p) {
        if (p == 1.0) {
            if (dof < 1) throw InvalidArgument("GateConfig: dof must be >= 1");
            return {dof, p, std::numeric_limits<double>::infinity()};
        }
        return {dof, p, chi2_threshold(dof, p)};
    }
};

/// Inlier iff d < threshold; the boundary itself is an outlier.
inline Label classify(double d, const GateConfig& cfg) {
    return d < cfg.threshold ? Label::Inlier : Label::Outlier;
}

}  // namespace itersmooth
