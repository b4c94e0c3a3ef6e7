// Spectral potential of the projected covariance: Gamma = tr(Q^p) with
// p = max(log k, 1), its drift decomposition driven by third moments of the
// marginal, and the exit-time statistics of |Q|_op over an ensemble.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "subloc/localization.hpp"
#include "subloc/sampler.hpp"
#include "subloc/subspace.hpp"

namespace subloc {

inline double default_p(int k) { return std::max(std::log(static_cast<double>(k)), 1.0); }

struct SpectralSnapshot {
    VectorXd lambdas;  // descending, clamped at 0
    MatrixXd eigvecs;  // columns match lambdas
    double p = 1.0;
    double gamma = 0.0;
    double gamma_root = 0.0;
    double min_eig_raw = 0.0;
    bool clamp_warning = false;  // raw eigenvalue below -1e-8
};

inline SpectralSnapshot snapshot(const MatrixXd& Q, double p_override = 0.0) {
    const int k = static_cast<int>(Q.rows());
    if (Q.cols() != k) throw std::invalid_argument("snapshot: Q must be square");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + Q.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("snapshot: Q not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(Q));
    if (es.info() != Eigen::Success) throw std::runtime_error("snapshot: eigensolve failed");

    SpectralSnapshot s;
    s.p = p_override > 0.0 ? p_override : default_p(k);
    s.min_eig_raw = es.eigenvalues().minCoeff();
    s.clamp_warning = s.min_eig_raw < -1e-8;
    s.lambdas.resize(k);
    s.eigvecs.resize(k, k);
    for (int i = 0; i < k; ++i) {  // Eigen sorts ascending; flip to descending
        s.lambdas(i) = std::max(es.eigenvalues()(k - 1 - i), 0.0);
        s.eigvecs.col(i) = es.eigenvectors().col(k - 1 - i);
    }
    s.gamma = s.lambdas.array().pow(s.p).sum();
    s.gamma_root = std::pow(s.gamma, 1.0 / s.p);
    return s;
}

// Third central moments of the k-dimensional marginal in the eigenbasis:
// u_ij = E[(z e_i)(z e_j) z], symmetric in (i, j) by construction.
struct ThirdMoments {
    std::vector<std::vector<VectorXd>> u;  // u[i][j], each a k-vector
    double se = 0.0;

    int k() const { return static_cast<int>(u.size()); }
    const VectorXd& at(int i, int j) const { return u[i][j]; }
};

// Batch must hold k-dimensional marginal points Y = (perp coordinates of X).
inline ThirdMoments third_moments(const SampleBatch& batch, const VectorXd& b,
                                  const MatrixXd& eigvecs) {
    const int m = batch.count();
    if (m == 0) throw std::invalid_argument("third_moments: empty batch");
    const int k = static_cast<int>(eigvecs.rows());
    if (batch.dim() != k || b.size() != k)
        throw std::invalid_argument("third_moments: dimension mismatch");
    VectorXd w = batch.weighted() ? VectorXd(batch.weights / batch.weights.sum())
                                  : VectorXd::Constant(m, 1.0 / m);
    const MatrixXd z = eigvecs.transpose() * (batch.points.colwise() - b);

    ThirdMoments tm;
    tm.u.assign(k, std::vector<VectorXd>(k, VectorXd::Zero(k)));
    for (int s = 0; s < m; ++s) {
        const VectorXd zc = z.col(s);
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) tm.u[i][j] += (w(s) * zc(i) * zc(j)) * zc;
    }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < i; ++j) tm.u[i][j] = tm.u[j][i];

    const double n_eff = 1.0 / w.squaredNorm();
    double max_sixth = 0.0;
    for (int i = 0; i < k; ++i) {
        double sixth = 0.0;
        for (int s = 0; s < m; ++s) sixth += w(s) * std::pow(z(i, s), 6);
        max_sixth = std::max(max_sixth, sixth);
    }
    tm.se = std::sqrt(max_sixth / n_eff);
    return tm;
}

inline SampleBatch marginal_batch(const SampleBatch& b, const SubspaceSplit& split) {
    SampleBatch out = b;
    out.points = split.basis_perp().transpose() * b.points;
    return out;
}

struct DriftTerms {
    VectorXd v;
    double delta_upper = 0.0;
};

// d(Gamma^{1/p}) = v . dW + delta dt with
//   v = (sum lambda^p)^{1/p - 1} sum_i lambda_i^{p-1} u_ii
//   delta <= (p-1)(sum lambda^p)^{1/p - 1} sum_ij lambda_i^{p-2} |u_ij|^2
inline DriftTerms drift_terms(const SpectralSnapshot& s, const ThirdMoments& u) {
    const int k = static_cast<int>(s.lambdas.size());
    if (u.k() != k) throw std::invalid_argument("drift_terms: dimension mismatch");
    if (!(s.gamma > 0.0)) throw std::domain_error("drift_terms: degenerate state, gamma = 0");
    const double front = std::pow(s.gamma, 1.0 / s.p - 1.0);
    DriftTerms out;
    out.v = VectorXd::Zero(k);
    for (int i = 0; i < k; ++i)
        out.v += std::pow(s.lambdas(i), s.p - 1.0) * u.at(i, i);
    out.v *= front;
    double quad = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double u2 = u.at(i, j).squaredNorm();
            if (u2 == 0.0) continue;
            quad += std::pow(s.lambdas(i), s.p - 2.0) * u2;
        }
    }
    out.delta_upper = (s.p - 1.0) * front * quad;
    return out;
}

struct BoundCheck {
    double fitted = 0.0;  // worst ratio over the series
    double threshold = 0.0;
    bool pass = false;
    int points = 0;
};

// |v_t| <= c (Gamma^{1/p})^{3/2} with a universal c; the fitted constant is the
// observed worst case and passes under the configured ceiling.
inline BoundCheck check_vt_bound(const std::vector<std::pair<double, double>>& v_and_root,
                                 double c_max = 20.0) {
    if (v_and_root.empty()) throw std::invalid_argument("check_vt_bound: empty series");
    BoundCheck out;
    out.threshold = c_max;
    out.points = static_cast<int>(v_and_root.size());
    for (const auto& [vnorm, root] : v_and_root) {
        if (root <= 0.0) continue;
        out.fitted = std::max(out.fitted, vnorm / std::pow(root, 1.5));
    }
    out.pass = out.fitted <= c_max;
    return out;
}

struct DeltaPoint {
    double delta_upper = 0.0;
    double gamma = 0.0;
    double p = 1.0;
};

// delta_t <= 4 p Gamma^{2/p} Psi_k^2; ratio capped at 1 plus the Monte Carlo
// slack coming from the third-moment estimates.
inline BoundCheck check_delta_bound(const std::vector<DeltaPoint>& series, double psi_k,
                                    double tol_mc = 0.0) {
    if (!(psi_k > 0.0)) throw std::invalid_argument("check_delta_bound: psi_k must be positive");
    BoundCheck out;
    out.threshold = 1.0 + tol_mc;
    out.points = static_cast<int>(series.size());
    for (const auto& pt : series) {
        if (!(pt.gamma > 0.0)) continue;
        const double bound = 4.0 * pt.p * std::pow(pt.gamma, 2.0 / pt.p) * psi_k * psi_k;
        out.fitted = std::max(out.fitted, pt.delta_upper / bound);
    }
    out.pass = out.fitted <= out.threshold;
    return out;
}

struct ExitTimeStats {
    std::vector<double> times;
    std::vector<double> exceed_prob;  // P(max_{s<=t} |Q_s|_op >= threshold)
    std::vector<double> upper95;      // binomial upper bound (rule of three at 0)
    std::vector<double> reference;    // exp(-c1 / t), c1 from config
    double threshold = 0.0;
    int paths = 0;
};

inline ExitTimeStats exit_time_stats(const std::vector<PathRecord>& ensemble, double threshold,
                                     double c1_reference = 0.1) {
    ExitTimeStats out;
    out.threshold = threshold;
    std::vector<const PathRecord*> live;
    for (const auto& r : ensemble)
        if (!r.censored && !r.times.empty()) live.push_back(&r);
    out.paths = static_cast<int>(live.size());
    if (live.empty()) return out;
    const std::size_t n_times = live.front()->times.size();
    out.times = live.front()->times;
    std::vector<double> running_max(live.size(), 0.0);
    for (std::size_t ti = 0; ti < n_times; ++ti) {
        int count = 0;
        for (std::size_t pi = 0; pi < live.size(); ++pi) {
            running_max[pi] = std::max(running_max[pi], sym_opnorm(live[pi]->states[ti].Q));
            if (running_max[pi] >= threshold) ++count;
        }
        const double frac = static_cast<double>(count) / out.paths;
        out.exceed_prob.push_back(frac);
        out.upper95.push_back(count == 0 ? zero_count_upper95(out.paths)
                                         : frac + 3.0 * binomial_se(frac, out.paths));
        const double t = out.times[ti];
        out.reference.push_back(t > 0.0 ? std::exp(-c1_reference / t) : 0.0);
    }
    return out;
}

// Both sides of the quadratic-variation identity for Gamma^{1/p}: empirical
// squared increments against the integrated |v|^2. Meaningful when the series
// noise is dominated by genuine martingale motion.
struct GammaQvCheck {
    double empirical_qv = 0.0;
    double integrated_v2 = 0.0;
    bool pass = false;
};

inline GammaQvCheck gamma_qv_check(const std::vector<std::vector<double>>& gamma_root_paths,
                                   const std::vector<std::vector<double>>& v_norm_paths,
                                   double dt, double slack = 0.25) {
    GammaQvCheck out;
    if (gamma_root_paths.empty()) return out;
    double emp = 0.0, integ = 0.0;
    for (std::size_t pi = 0; pi < gamma_root_paths.size(); ++pi) {
        const auto& g = gamma_root_paths[pi];
        const auto& v = v_norm_paths[pi];
        for (std::size_t i = 1; i < g.size(); ++i) {
            const double d = g[i] - g[i - 1];
            emp += d * d;
            integ += v[i - 1] * v[i - 1] * dt;
        }
    }
    out.empirical_qv = emp / gamma_root_paths.size();
    out.integrated_v2 = integ / gamma_root_paths.size();
    out.pass = out.empirical_qv <= out.integrated_v2 * (1.0 + slack);
    return out;
}

}  // namespace subloc
