#pragma once

// Small statistics toolkit: sample moments, normal-approximation confidence
// intervals, and the chi-square survival function (via the regularized
// incomplete gamma function, series + continued-fraction evaluation).

#include <cmath>
#include <limits>

#include "voisim/common.hpp"

namespace voisim {

inline double mean_of(const Vec& xs) {
    require(!xs.empty(), "mean_of: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased sample variance; 0 for samples of size < 2.
inline double var_of(const Vec& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double stderr_of(const Vec& xs) {
    return std::sqrt(var_of(xs) / static_cast<double>(xs.size()));
}

struct MeanCi {
    double mean = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double se = 0.0;
    size_t n = 0;
};

// Normal-approximation two-sided CI (z = 1.96 for 95%).
inline MeanCi mean_ci(const Vec& xs, double z = 1.96) {
    MeanCi out;
    out.n = xs.size();
    out.mean = mean_of(xs);
    out.se = stderr_of(xs);
    out.ci_lo = out.mean - z * out.se;
    out.ci_hi = out.mean + z * out.se;
    return out;
}

namespace detail {

// Regularized lower incomplete gamma P(a, x) by series, for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction,
// for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
    require(a > 0.0 && x >= 0.0, "gamma_q: domain a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

// Survival function of the chi-square distribution. dof == 0 is treated as
// the degenerate "no evidence" case and maps to p = 1.
inline double chi2_sf(double stat, double dof) {
    if (dof <= 0.0) return 1.0;
    if (stat <= 0.0) return 1.0;
    return gamma_q(dof / 2.0, stat / 2.0);
}

}  // namespace voisim
