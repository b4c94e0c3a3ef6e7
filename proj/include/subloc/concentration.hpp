// Concentration-function estimation over half-space families and the
// inequality checks built on it: strong log-concavity tails, the main
// envelope bound, Poincare proxies, Lipschitz deviations.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "subloc/halfspace.hpp"
#include "subloc/linalg.hpp"
#include "subloc/localization.hpp"
#include "subloc/sampler.hpp"
#include "subloc/spectra.hpp"
#include "subloc/stats.hpp"

namespace subloc {

struct ConcentrationCurve {
    std::vector<double> radii;
    std::vector<double> alpha;      // isotonic (nonincreasing) projection
    std::vector<double> alpha_raw;  // direction-family maximum as measured
    std::vector<double> se;
    std::vector<int> worst_direction;
    int family_size = 0;
};

// canonical axes + covariance eigenvectors + n_random uniform directions
inline std::vector<VectorXd> direction_family(const MatrixXd& cov, int n_random = 64,
                                              std::uint64_t seed = 0) {
    const int n = static_cast<int>(cov.rows());
    std::vector<VectorXd> dirs;
    for (int i = 0; i < n; ++i) dirs.push_back(VectorXd::Unit(n, i));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(cov));
    for (int i = 0; i < n; ++i) dirs.push_back(es.eigenvectors().col(i));
    Philox rng(seed, stream_id(streams::kScratch, 101));
    for (int i = 0; i < n_random; ++i) dirs.push_back(random_unit_vector(n, rng));
    return dirs;
}

namespace detail {

// pool-adjacent-violators projection onto nonincreasing sequences
inline std::vector<double> isotonic_nonincreasing(const std::vector<double>& y) {
    const std::size_t n = y.size();
    std::vector<double> level;
    std::vector<std::size_t> count;
    for (std::size_t i = 0; i < n; ++i) {
        level.push_back(y[i]);
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] < level.back()) {
            const double merged = (level[level.size() - 2] * count[count.size() - 2] +
                                   level.back() * count.back()) /
                                  (count[count.size() - 2] + count.back());
            count[count.size() - 2] += count.back();
            level[level.size() - 2] = merged;
            level.pop_back();
            count.pop_back();
        }
    }
    std::vector<double> out;
    for (std::size_t b = 0; b < level.size(); ++b)
        out.insert(out.end(), count[b], level[b]);
    return out;
}

struct ProjectedMass {
    std::vector<double> proj;    // ascending
    std::vector<double> suffix;  // suffix[i] = weight of proj[i..]
    double median = 0.0;

    double beyond(double cut) const {
        const auto it = std::upper_bound(proj.begin(), proj.end(), cut);
        return it == proj.end() ? 0.0 : suffix[it - proj.begin()];
    }
};

inline ProjectedMass project_sorted(const SampleBatch& batch, const VectorXd& theta) {
    const int m = batch.count();
    const VectorXd raw = batch.points.transpose() * theta;
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return raw(a) < raw(b); });

    ProjectedMass pm;
    pm.proj.resize(m);
    std::vector<double> w(m, 1.0 / m);
    if (batch.weighted()) {
        const double total = batch.weights.sum();
        for (int i = 0; i < m; ++i) w[i] = batch.weights(order[i]) / total;
    }
    for (int i = 0; i < m; ++i) pm.proj[i] = raw(order[i]);
    pm.suffix.resize(m);
    double acc = 0.0;
    for (int i = m - 1; i >= 0; --i) {
        acc += w[i];
        pm.suffix[i] = acc;
    }
    pm.median = weighted_median(pm.proj, batch.weighted() ? &w : nullptr);
    return pm;
}

}  // namespace detail

inline ConcentrationCurve alpha_curve(const SampleBatch& batch,
                                      const std::vector<VectorXd>& directions,
                                      const std::vector<double>& radii) {
    if (batch.count() == 0) throw std::invalid_argument("alpha_curve: empty batch");
    if (directions.empty()) throw std::invalid_argument("alpha_curve: no directions");
    for (double r : radii)
        if (r < 0.0) throw std::invalid_argument("alpha_curve: radii must be nonnegative");

    ConcentrationCurve curve;
    curve.radii = radii;
    curve.family_size = static_cast<int>(directions.size());
    curve.alpha_raw.assign(radii.size(), 0.0);
    curve.worst_direction.assign(radii.size(), 0);

    double n_eff = batch.count();
    if (batch.weighted()) {
        const VectorXd w = batch.weights / batch.weights.sum();
        n_eff = 1.0 / w.squaredNorm();
    }
    for (int di = 0; di < curve.family_size; ++di) {
        VectorXd theta = directions[di];
        const double norm = theta.norm();
        if (!(norm > 0.0)) throw std::invalid_argument("alpha_curve: zero direction");
        theta /= norm;
        const auto pm = detail::project_sorted(batch, theta);
        for (std::size_t ri = 0; ri < radii.size(); ++ri) {
            const double mass = pm.beyond(pm.median + radii[ri]);
            if (mass > curve.alpha_raw[ri]) {
                curve.alpha_raw[ri] = mass;
                curve.worst_direction[ri] = di;
            }
        }
    }
    curve.alpha = detail::isotonic_nonincreasing(curve.alpha_raw);
    for (std::size_t ri = 0; ri < radii.size(); ++ri)
        curve.se.push_back(binomial_se(curve.alpha_raw[ri], n_eff));
    return curve;
}

struct TailRow {
    int set_index = 0;
    double r = 0.0;
    double empirical = 0.0;
    double se = 0.0;
    double bound = 1.0;
    bool pass = false;
};

struct StrongLogconcaveReport {
    std::vector<TailRow> rows;
    double t = 0.0;
    bool pass = true;
};

// mass beyond the r-extension of a half-level set against exp(-t r^2/4)/mu(S)
inline StrongLogconcaveReport check_strong_logconcave_bound(const SampleBatch& batch,
                                                            const std::vector<HalfSpace>& sets,
                                                            double t,
                                                            const std::vector<double>& radii) {
    if (!(t > 0.0))
        throw std::invalid_argument("check_strong_logconcave_bound: t must be positive");
    StrongLogconcaveReport rep;
    rep.t = t;
    double n_eff = batch.count();
    if (batch.weighted()) {
        const VectorXd w = batch.weights / batch.weights.sum();
        n_eff = 1.0 / w.squaredNorm();
    }
    for (std::size_t si = 0; si < sets.size(); ++si) {
        const auto pm = detail::project_sorted(batch, sets[si].theta);
        const double mu_s = 1.0 - pm.beyond(sets[si].m);
        if (!(mu_s > 0.0))
            throw std::invalid_argument("check_strong_logconcave_bound: set has zero mass");
        for (double r : radii) {
            TailRow row;
            row.set_index = static_cast<int>(si);
            row.r = r;
            row.empirical = pm.beyond(sets[si].m + r);
            row.se = binomial_se(row.empirical, n_eff);
            row.bound = std::exp(-t * r * r / 4.0) / mu_s;
            row.pass = row.empirical <= row.bound + 3.0 * row.se;
            rep.rows.push_back(row);
            rep.pass = rep.pass && row.pass;
        }
    }
    return rep;
}

struct MainTheoremReport {
    std::vector<double> envelope;   // min(r/sqrt|Q|, r^2 min(eta, 1/(psi^2 max(log k,1)|Q|)))
    double fitted_prefactor = 0.0;  // largest c with alpha(r) <= exp(-c envelope(r)) on the grid
    double min_tail_ratio = 0.0;    // min of -log alpha(r) / r over the last third
    bool monotone = false;
    bool pass = false;
};

inline MainTheoremReport check_main_theorem(const ConcentrationCurve& curve, double eta, int k,
                                            double q_norm, double psi_k = 1.0) {
    if (!(q_norm > 0.0)) throw std::invalid_argument("check_main_theorem: q_norm must be positive");
    MainTheoremReport rep;
    const double quad_rate =
        std::min(eta, 1.0 / (psi_k * psi_k * default_p(k) * q_norm));
    double fitted = std::numeric_limits<double>::infinity();
    rep.monotone = true;
    for (std::size_t i = 0; i < curve.radii.size(); ++i) {
        const double r = curve.radii[i];
        rep.envelope.push_back(std::min(r / std::sqrt(q_norm), r * r * quad_rate));
        if (i > 0 && curve.alpha[i] > curve.alpha[i - 1] + 1e-15) rep.monotone = false;
        if (r > 0.0 && curve.alpha[i] > 0.0 && rep.envelope.back() > 0.0)
            fitted = std::min(fitted, -std::log(curve.alpha[i]) / rep.envelope.back());
    }
    rep.fitted_prefactor = std::isinf(fitted) ? 0.0 : fitted;

    double min_ratio = std::numeric_limits<double>::infinity();
    const std::size_t start = curve.radii.size() - curve.radii.size() / 3;
    for (std::size_t i = start; i < curve.radii.size(); ++i) {
        if (!(curve.radii[i] > 0.0)) continue;
        if (curve.alpha[i] <= 0.0) continue;  // below sampling resolution, consistent
        min_ratio = std::min(min_ratio, -std::log(curve.alpha[i]) / curve.radii[i]);
    }
    rep.min_tail_ratio = std::isinf(min_ratio) ? 0.0 : min_ratio;
    rep.pass = rep.monotone && rep.fitted_prefactor > 0.0 &&
               (rep.min_tail_ratio > 0.0 || std::isinf(min_ratio));
    return rep;
}

struct PoincareProxies {
    double alpha_inv_quarter = 0.0;  // upper proxy for the Poincare constant
    double rayleigh_lower = 0.0;     // sqrt of the largest covariance eigenvalue
    double theorem_rhs = 0.0;        // max(1/sqrt(eta), sqrt|Q| psi sqrt(max(log k,1)))
};

inline PoincareProxies poincare_proxies(const ConcentrationCurve& curve, const MatrixXd& cov,
                                        double eta, double q_norm, int k, double psi_k = 1.0) {
    PoincareProxies out;
    std::size_t hit = curve.alpha.size();
    for (std::size_t i = 0; i < curve.alpha.size(); ++i)
        if (curve.alpha[i] <= 0.25) {
            hit = i;
            break;
        }
    if (hit == curve.alpha.size())
        throw std::runtime_error("poincare_proxies: curve never reaches 1/4, extend the radii");
    if (hit == 0) {
        out.alpha_inv_quarter = curve.radii[0];
    } else {
        const double a0 = curve.alpha[hit - 1], a1 = curve.alpha[hit];
        const double r0 = curve.radii[hit - 1], r1 = curve.radii[hit];
        out.alpha_inv_quarter = r0 + (r1 - r0) * (a0 - 0.25) / (a0 - a1);
    }
    out.rayleigh_lower = std::sqrt(std::max(sym_opnorm(cov), 0.0));
    out.theorem_rhs = std::max(1.0 / std::sqrt(eta),
                               std::sqrt(q_norm) * psi_k * std::sqrt(default_p(k)));
    return out;
}

struct LipschitzTail {
    double median = 0.0;
    std::vector<double> radii;
    std::vector<double> tail;  // P(g >= median + L r)
    std::vector<double> se;
};

inline LipschitzTail lipschitz_tail(const SampleBatch& batch,
                                    const std::function<double(const VectorXd&)>& g, double L,
                                    const std::vector<double>& radii) {
    if (!(L > 0.0)) throw std::invalid_argument("lipschitz_tail: L must be positive");
    const int m = batch.count();
    if (m == 0) throw std::invalid_argument("lipschitz_tail: empty batch");
    std::vector<double> vals(m);
    for (int s = 0; s < m; ++s) vals[s] = g(batch.points.col(s));
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });

    std::vector<double> sorted(m), w(m, 1.0 / m);
    for (int i = 0; i < m; ++i) sorted[i] = vals[order[i]];
    if (batch.weighted()) {
        const double total = batch.weights.sum();
        for (int i = 0; i < m; ++i) w[i] = batch.weights(order[i]) / total;
    }
    std::vector<double> suffix(m);
    double acc = 0.0;
    for (int i = m - 1; i >= 0; --i) {
        acc += w[i];
        suffix[i] = acc;
    }
    double n_eff = m;
    if (batch.weighted()) {
        double sq = 0.0;
        for (double wi : w) sq += wi * wi;
        n_eff = 1.0 / sq;
    }

    LipschitzTail out;
    out.median = weighted_median(sorted, batch.weighted() ? &w : nullptr);
    out.radii = radii;
    for (double r : radii) {
        const double cut = out.median + L * r;
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), cut);
        const double mass = it == sorted.end() ? 0.0 : suffix[it - sorted.begin()];
        out.tail.push_back(mass);
        out.se.push_back(binomial_se(mass, n_eff));
    }
    return out;
}

}  // namespace subloc
