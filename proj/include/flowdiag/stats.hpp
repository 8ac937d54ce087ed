#pragma once

// Special functions and descriptive statistics used by the analysis layer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>

#include "flowdiag/model.hpp"

namespace flowdiag::stats {

class domain_error : public error {
public:
    using error::error;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed by
/// one Halley step against std::erfc, which brings the result to round-off.
inline double normal_inverse_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw domain_error("normal_inverse_cdf: p must lie in (0, 1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

/// Two-sided standard normal quantile A(eps): P(|Z| > A) = eps.
inline double normal_quantile(double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw domain_error("normal_quantile: epsilon must lie in (0, 1)");
    return normal_inverse_cdf(1.0 - epsilon / 2.0);
}

/// Regularized lower incomplete gamma function P(a, x).
inline double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0)) throw domain_error("regularized_gamma_p: a must be positive");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;

    constexpr double eps = 1e-15;
    constexpr int max_iter = 10000;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);

    if (x < a + 1.0) {
        // Power series.
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < max_iter; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::clamp(sum * std::exp(log_prefix), 0.0, 1.0);
    }

    // Continued fraction for Q(a, x), modified Lentz.
    constexpr double tiny = std::numeric_limits<double>::min() / eps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < max_iter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::clamp(1.0 - std::exp(log_prefix) * h, 0.0, 1.0);
}

inline double chi_square_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw domain_error("chi_square_cdf: dof must be positive");
    return regularized_gamma_p(dof / 2.0, x / 2.0);
}

/// Critical value x with chi_square_cdf(x, dof) == level.
inline double chi_square_quantile(double level, double dof) {
    if (!(level > 0.0 && level < 1.0))
        throw domain_error("chi_square_quantile: level must lie in (0, 1)");
    if (!(dof > 0.0)) throw domain_error("chi_square_quantile: dof must be positive");

    double lo = 0.0;
    double hi = std::max(1.0, dof);
    while (chi_square_cdf(hi, dof) < level) hi *= 2.0;
    // The CDF is monotone, so bisection converges to the last representable bit.
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (chi_square_cdf(mid, dof) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

/// Two-pass standard deviation with divisor (n - ddof).
inline double stddev(std::span<const double> xs, int ddof = 1) {
    const auto n = static_cast<double>(xs.size());
    if (n - ddof <= 0) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / (n - ddof));
}

/// Pearson product-moment correlation. Throws when either side has zero variance.
inline double pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw domain_error("pearson_correlation: length mismatch");
    if (xs.size() < 2) throw domain_error("pearson_correlation: need at least two points");
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw domain_error("correlation undefined: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace flowdiag::stats
