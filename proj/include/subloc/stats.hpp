// Scalar distribution functions and small statistical helpers: normal
// cdf/quantile, regularized incomplete gamma, chi-square tails, medians.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace subloc {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse normal cdf: Acklam's rational approximation followed by one Halley
// refinement step, giving close to full double precision.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
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
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

inline double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail by modified Lentz continued fraction.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Regularized incomplete gamma P(a,x) and Q(a,x) = 1 - P(a,x).
inline double gamma_p(double a, double x) {
    if (a <= 0.0) throw std::domain_error("gamma_p: a must be positive");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

inline double gamma_q(double a, double x) {
    if (a <= 0.0) throw std::domain_error("gamma_q: a must be positive");
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

// P(chi^2_dof > x)
inline double chi_square_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

// P(|Z| > r) for Z standard normal in R^dof, i.e. the chi distribution tail.
inline double chi_sf(double r, double dof) {
    if (r <= 0.0) return 1.0;
    return chi_square_sf(r * r, dof);
}

// Smallest x with P(chi^2_dof > x) <= tail. Bisection; the sf is monotone.
inline double chi_square_isf(double tail, double dof) {
    if (!(tail > 0.0 && tail < 1.0)) throw std::domain_error("chi_square_isf: tail outside (0,1)");
    double lo = 0.0, hi = dof + 10.0;
    while (chi_square_sf(hi, dof) > tail) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (chi_square_sf(mid, dof) > tail ? lo : hi) = mid;
    }
    return hi;
}

inline double binomial_se(double p_hat, double n_eff) {
    if (n_eff <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(std::max(p_hat * (1.0 - p_hat), 0.0) / n_eff);
}

// One-sided 95% upper bound when zero successes are observed ("rule of three").
inline double zero_count_upper95(double n) {
    return n > 0 ? 3.0 / n : std::numeric_limits<double>::infinity();
}

// Weighted median: smallest value whose cumulative weight reaches half the
// total. Unweighted even-sized inputs average the two middle order statistics.
inline double weighted_median(std::vector<double> values, const std::vector<double>* weights = nullptr) {
    if (values.empty()) throw std::invalid_argument("weighted_median: empty input");
    if (weights == nullptr) {
        std::sort(values.begin(), values.end());
        const std::size_t n = values.size();
        if (n % 2 == 1) return values[n / 2];
        return 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
    if (weights->size() != values.size())
        throw std::invalid_argument("weighted_median: size mismatch");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    const double total = std::accumulate(weights->begin(), weights->end(), 0.0);
    double cum = 0.0;
    for (const std::size_t i : idx) {
        cum += (*weights)[i];
        if (cum >= 0.5 * total) return values[i];
    }
    return values[idx.back()];
}

// Kolmogorov-Smirnov distance of a sample to a reference cdf.
template <class CDF>
double ks_statistic(std::vector<double> xs, CDF&& cdf) {
    if (xs.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max(d, std::max(f - i / n, (i + 1) / n - f));
    }
    return d;
}

// Composite Simpson rule; n_intervals is rounded up to even.
template <class F>
double simpson(F&& f, double lo, double hi, int n_intervals) {
    if (!(hi > lo)) throw std::invalid_argument("simpson: empty interval");
    int n = std::max(2, n_intervals + (n_intervals % 2));
    const double h = (hi - lo) / n;
    double sum = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

inline double logsumexp(const std::vector<double>& xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (const double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace subloc
