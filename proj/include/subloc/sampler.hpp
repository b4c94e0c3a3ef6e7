// Sampling from tilted measures and moment estimation. Exact draws for
// Gaussian laws, Metropolis-adjusted Langevin for everything else.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "subloc/linalg.hpp"
#include "subloc/philox.hpp"
#include "subloc/potential.hpp"
#include "subloc/stats.hpp"

namespace subloc {

enum class SampleSource { exact, mala, reweighted };

struct SampleBatch {
    MatrixXd points;   // one column per sample
    VectorXd weights;  // empty means uniform; otherwise sums to 1
    SampleSource source = SampleSource::exact;
    std::uint64_t seed = 0;
    double acceptance = std::numeric_limits<double>::quiet_NaN();
    double step_used = std::numeric_limits<double>::quiet_NaN();

    int dim() const { return static_cast<int>(points.rows()); }
    int count() const { return static_cast<int>(points.cols()); }
    bool weighted() const { return weights.size() > 0; }
};

// Uniform view over plain and tilted potentials for the samplers.
struct TargetView {
    int dim = 0;
    std::function<double(const VectorXd&)> value;
    std::function<VectorXd(const VectorXd&)> gradient;
    double curvature_floor = 0.0;
    double support_radius = std::numeric_limits<double>::infinity();
};

inline TargetView target_of(const Potential& p) {
    const MatrixXd H0 = p.hessian_at(VectorXd::Zero(p.split.n));
    return {p.split.n, p.value, p.gradient, std::max(sym_min_eig(H0), 0.0), p.support_radius};
}

inline TargetView target_of(const TiltedPotential& tp) {
    TiltedPotential copy = tp;
    return {tp.base->split.n,
            [copy](const VectorXd& x) { return copy.value(x); },
            [copy](const VectorXd& x) { return copy.gradient(x); },
            std::max(copy.curvature_floor(), 0.0),
            tp.base->support_radius};
}

inline SampleBatch sample_exact_gaussian(const MatrixXd& sigma, const VectorXd& mean, int count,
                                         std::uint64_t seed, std::uint64_t stream_index = 0) {
    const int n = static_cast<int>(mean.size());
    const MatrixXd factor = sqrt_psd(sigma);  // rejects indefinite input
    Philox rng(seed, stream_id(streams::kSampler, stream_index));
    SampleBatch b;
    b.source = SampleSource::exact;
    b.seed = seed;
    b.points.resize(n, count);
    VectorXd z(n);
    for (int j = 0; j < count; ++j) {
        for (int i = 0; i < n; ++i) z(i) = rng.normal();
        b.points.col(j) = mean + factor * z;
    }
    return b;
}

struct MalaConfig {
    double step = 0.0;           // 0 = start from the curvature scale, then tune
    int warmup = -1;             // negative = ceil(10 / (step * theta0))
    int thinning = 1;
    VectorXd init;               // empty = origin
    bool tune = true;
    int tune_rounds = 24;        // 25 iterations each; fewer when warm-started
    std::uint64_t stream_index = 0;
};

// Metropolis-adjusted Langevin chain targeting e^{-V}. Step size is tuned
// toward acceptance 0.574 during a pre-warmup phase, then frozen; the run
// fails loudly if the measured acceptance leaves [0.2, 0.9].
inline SampleBatch mala_sample(const TargetView& tv, int count, MalaConfig cfg,
                               std::uint64_t seed) {
    const int n = tv.dim;
    SampleBatch out;
    out.source = SampleSource::mala;
    out.seed = seed;
    out.points.resize(n, count);
    if (count == 0) return out;

    Philox rng(seed, stream_id(streams::kSampler, cfg.stream_index));
    VectorXd x = cfg.init.size() == n ? cfg.init : VectorXd::Zero(n);
    double vx = tv.value(x);
    if (!std::isfinite(vx))
        throw std::runtime_error("mala_sample: potential not finite at the initial point");
    VectorXd gx = tv.gradient(x);

    const double theta0 = std::max(std::min(tv.curvature_floor,
                                            std::numeric_limits<double>::max()),
                                   0.1);
    double step = cfg.step > 0.0 ? cfg.step : 1.0 / std::max(theta0, 1.0);

    VectorXd prop(n), gp(n), xi(n);
    const auto advance = [&](double tau) -> bool {
        for (int i = 0; i < n; ++i) xi(i) = rng.normal();
        prop = x - tau * gx + std::sqrt(2.0 * tau) * xi;
        const double vp = tv.value(prop);
        const double u = rng.uniform();
        if (!std::isfinite(vp)) return false;
        gp = tv.gradient(prop);
        const VectorXd fwd = prop - x + tau * gx;
        const VectorXd bwd = x - prop + tau * gp;
        const double log_alpha =
            vx - vp + (fwd.squaredNorm() - bwd.squaredNorm()) / (4.0 * tau);
        if (std::log(u) < log_alpha) {
            x = prop;
            vx = vp;
            gx = gp;
            return true;
        }
        return false;
    };

    if (cfg.tune) {
        const int rounds = std::max(1, cfg.tune_rounds), per_round = 25;
        for (int r = 0; r < rounds; ++r) {
            int acc = 0;
            for (int i = 0; i < per_round; ++i) acc += advance(step);
            const double rate = static_cast<double>(acc) / per_round;
            const double gain = 1.5 / std::sqrt(r + 1.0);
            step = std::clamp(step * std::exp(gain * (rate - 0.574)), 1e-10, 1e4);
        }
    }
    out.step_used = step;

    const int warmup = cfg.warmup >= 0
                           ? cfg.warmup
                           : static_cast<int>(std::ceil(10.0 / (step * theta0)));
    for (int i = 0; i < warmup; ++i) advance(step);

    const int thin = std::max(1, cfg.thinning);
    long accepted = 0, attempted = 0;
    for (int j = 0; j < count; ++j) {
        for (int s = 0; s < thin; ++s) {
            accepted += advance(step);
            ++attempted;
        }
        out.points.col(j) = x;
    }
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(attempted);
    if (attempted >= 50 && (out.acceptance < 0.2 || out.acceptance > 0.9))
        throw std::runtime_error("mala_sample: acceptance rate " +
                                 std::to_string(out.acceptance) +
                                 " outside [0.2, 0.9]; step size mis-specified");
    return out;
}

inline SampleBatch mala_sample(const Potential& p, int count, const MalaConfig& cfg,
                               std::uint64_t seed) {
    return mala_sample(target_of(p), count, cfg, seed);
}

inline SampleBatch mala_sample(const TiltedPotential& tp, int count, const MalaConfig& cfg,
                               std::uint64_t seed) {
    return mala_sample(target_of(tp), count, cfg, seed);
}

struct MomentEstimate {
    VectorXd mean;
    MatrixXd cov;
    double n_eff = 0.0;
    VectorXd mean_se;
    double cov_se = 0.0;
};

inline MomentEstimate estimate_moments(const SampleBatch& b) {
    const int m = b.count();
    if (m < 2) throw std::invalid_argument("estimate_moments: need at least 2 points");
    const int n = b.dim();
    VectorXd w;
    if (b.weighted()) {
        if (b.weights.size() != m) throw std::invalid_argument("estimate_moments: weight size");
        const double total = b.weights.sum();
        if (!(total > 0.0)) throw std::invalid_argument("estimate_moments: zero total weight");
        w = b.weights / total;
    } else {
        w = VectorXd::Constant(m, 1.0 / m);
    }
    MomentEstimate est;
    est.mean = b.points * w;
    const double sum_w2 = w.squaredNorm();
    est.n_eff = 1.0 / sum_w2;
    MatrixXd centered = b.points.colwise() - est.mean;
    MatrixXd cov = MatrixXd::Zero(n, n);
    for (int j = 0; j < m; ++j) cov += w(j) * centered.col(j) * centered.col(j).transpose();
    if (sum_w2 < 1.0) cov /= (1.0 - sum_w2);  // unbiased correction
    est.cov = psd_clamp(symmetrize(cov), 0.0);
    est.mean_se = (est.cov.diagonal() / est.n_eff).cwiseMax(0.0).cwiseSqrt();
    est.cov_se = sym_opnorm(est.cov) * std::sqrt(2.0 / est.n_eff);
    return est;
}

// Importance-weight an existing batch toward a new target. Only trusted when
// the effective sample size stays above min_ess_frac of the batch.
inline std::optional<SampleBatch> reweight_batch(const SampleBatch& b, const TargetView& old_t,
                                                 const TargetView& new_t,
                                                 double min_ess_frac = 0.5) {
    const int m = b.count();
    if (m == 0) return std::nullopt;
    std::vector<double> logw(m);
    for (int j = 0; j < m; ++j) {
        const VectorXd x = b.points.col(j);
        logw[j] = old_t.value(x) - new_t.value(x);
        if (b.weighted()) logw[j] += std::log(std::max(b.weights(j), 1e-300));
        if (!std::isfinite(logw[j])) return std::nullopt;
    }
    const double lse = logsumexp(logw);
    SampleBatch out = b;
    out.source = SampleSource::reweighted;
    out.weights.resize(m);
    for (int j = 0; j < m; ++j) out.weights(j) = std::exp(logw[j] - lse);
    const double ess = 1.0 / out.weights.squaredNorm();
    if (ess < min_ess_frac * m) return std::nullopt;
    return out;
}

}  // namespace subloc
