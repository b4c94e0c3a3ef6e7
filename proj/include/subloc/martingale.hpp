// Freedman-type deviation machinery: discretized martingale paths with their
// quadratic variation, the tail bound exp(-a^2/2b), and the exponential
// supermartingale certificate it rests on.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "subloc/localization.hpp"
#include "subloc/philox.hpp"
#include "subloc/stats.hpp"

namespace subloc {

struct MartingalePath {
    std::vector<double> times;
    std::vector<double> values;  // M_t, started at 0
    std::vector<double> qv;      // running [M]_t, analytic where available

    void validate() const {
        if (times.empty() || times.size() != values.size() || times.size() != qv.size())
            throw std::invalid_argument("MartingalePath: inconsistent series lengths");
        if (values.front() != 0.0) throw std::invalid_argument("MartingalePath: M_0 must be 0");
        if (qv.front() != 0.0) throw std::invalid_argument("MartingalePath: qv_0 must be 0");
        for (std::size_t i = 1; i < qv.size(); ++i)
            if (qv[i] < qv[i - 1])
                throw std::invalid_argument("MartingalePath: qv must be nondecreasing");
    }

    // index of the last grid time <= T; a stopped path holds its final value
    std::size_t index_at(double T) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < times.size(); ++i)
            if (times[i] <= T + 1e-12) idx = i;
        return idx;
    }
};

inline double empirical_qv_terminal(const std::vector<double>& values) {
    double acc = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = values[i] - values[i - 1];
        acc += d * d;
    }
    return acc;
}

inline double freedman_bound(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("freedman_bound: a and b must be positive");
    return std::exp(-a * a / (2.0 * b));
}

// Stopped process M^tau with tau = first grid time the running qv exceeds b:
// keep the prefix where [M] <= b still holds.
inline MartingalePath truncate_at_qv(const MartingalePath& path, double b) {
    std::size_t keep = 0;
    while (keep < path.qv.size() && path.qv[keep] <= b) ++keep;
    if (keep == path.qv.size()) return path;
    if (keep == 0) keep = 1;  // qv_0 = 0 <= b whenever b >= 0
    MartingalePath out;
    out.times.assign(path.times.begin(), path.times.begin() + keep);
    out.values.assign(path.values.begin(), path.values.begin() + keep);
    out.qv.assign(path.qv.begin(), path.qv.begin() + keep);
    return out;
}

struct TailCheck {
    double fraction = 0.0;
    double se = 0.0;
    double bound = 1.0;
    bool pass = false;
    int paths = 0;
};

inline TailCheck empirical_tail(const std::vector<MartingalePath>& ensemble, double a, double b,
                                double T) {
    if (ensemble.size() < 100)
        throw std::invalid_argument("empirical_tail: need at least 100 paths");
    TailCheck out;
    out.paths = static_cast<int>(ensemble.size());
    out.bound = std::isinf(b) ? 1.0 : freedman_bound(a, b);
    int count = 0;
    for (const auto& path : ensemble) {
        const std::size_t i = path.index_at(T);
        if (path.values[i] >= a && path.qv[i] <= b) ++count;
    }
    out.fraction = static_cast<double>(count) / out.paths;
    out.se = binomial_se(out.fraction, out.paths);
    out.pass = out.fraction <= out.bound + 3.0 * out.se;
    return out;
}

struct SupermartingaleCheck {
    double lambda = 0.0;
    std::vector<double> times;
    std::vector<double> mean;  // ensemble mean of exp(lambda M - lambda^2/2 [M])
    std::vector<double> se;
    bool pass = false;
};

// E exp(lambda M_t - lambda^2/2 [M]_t) <= 1 for every lambda; computed in log
// space so large lambda M does not overflow before averaging.
inline std::vector<SupermartingaleCheck> exponential_supermartingale_check(
    const std::vector<MartingalePath>& ensemble, const std::vector<double>& lambda_grid) {
    if (ensemble.empty())
        throw std::invalid_argument("exponential_supermartingale_check: empty ensemble");
    const std::size_t n_times = ensemble.front().times.size();
    for (const auto& path : ensemble)
        if (path.times.size() != n_times)
            throw std::invalid_argument(
                "exponential_supermartingale_check: ensemble must share one grid");
    const double n = static_cast<double>(ensemble.size());

    std::vector<SupermartingaleCheck> out;
    for (double lambda : lambda_grid) {
        SupermartingaleCheck chk;
        chk.lambda = lambda;
        chk.times = ensemble.front().times;
        chk.pass = true;
        std::vector<double> logs(ensemble.size());
        for (std::size_t ti = 0; ti < n_times; ++ti) {
            for (std::size_t pi = 0; pi < ensemble.size(); ++pi)
                logs[pi] = lambda * ensemble[pi].values[ti] -
                           0.5 * lambda * lambda * ensemble[pi].qv[ti];
            const double log_mean = logsumexp(logs) - std::log(n);
            const double log_m2 = [&] {
                std::vector<double> twice(logs);
                for (double& x : twice) x *= 2.0;
                return logsumexp(twice) - std::log(n);
            }();
            const double mean = std::exp(log_mean);
            const double var = std::max(std::exp(log_m2) - mean * mean, 0.0);
            const double se = std::sqrt(var / n);
            chk.mean.push_back(mean);
            chk.se.push_back(se);
            if (!(mean <= 1.0 + 3.0 * se)) chk.pass = false;
        }
        out.push_back(std::move(chk));
    }
    return out;
}

inline std::vector<MartingalePath> brownian_paths(int n_paths, double T, double dt,
                                                  std::uint64_t seed) {
    if (n_paths <= 0 || !(T > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("brownian_paths: bad arguments");
    const int steps = static_cast<int>(std::ceil(T / dt - 1e-12));
    std::vector<MartingalePath> out;
    out.reserve(n_paths);
    for (int pi = 0; pi < n_paths; ++pi) {
        Philox rng(seed, stream_id(streams::kBrownian, static_cast<std::uint32_t>(pi)));
        MartingalePath path;
        path.times.push_back(0.0);
        path.values.push_back(0.0);
        path.qv.push_back(0.0);  // analytic [B]_t = t
        double x = 0.0;
        for (int i = 1; i <= steps; ++i) {
            const double t = std::min(i * dt, T);
            x += std::sqrt(t - path.times.back()) * rng.normal();
            path.times.push_back(t);
            path.values.push_back(x);
            path.qv.push_back(t);
        }
        out.push_back(std::move(path));
    }
    return out;
}

// Centered set-mass series s_t - s_0 of one recorded path; its quadratic
// variation is dominated by the running integral of |Q_s|_op.
inline MartingalePath set_mass_martingale(const PathRecord& rec, int set_index,
                                          bool use_qv_bound = true) {
    if (rec.times.empty()) throw std::invalid_argument("set_mass_martingale: empty record");
    MartingalePath path;
    path.times = rec.times;
    const double s0 = rec.set_measures.at(0).at(set_index).s;
    for (const auto& sm : rec.set_measures) path.values.push_back(sm.at(set_index).s - s0);
    if (use_qv_bound) {
        path.qv = rec.qv_bound;
    } else {
        path.qv.push_back(0.0);
        for (std::size_t i = 1; i < path.values.size(); ++i) {
            const double d = path.values[i] - path.values[i - 1];
            path.qv.push_back(path.qv.back() + d * d);
        }
    }
    return path;
}

}  // namespace subloc
