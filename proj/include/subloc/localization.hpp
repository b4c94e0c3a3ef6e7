// Euler-Maruyama driver for the projected localization process. The measure
// evolves through its tilt vector alone: dc = P dB + P a dt, and the tilted
// density at (t, c) is re-sampled to estimate the moments feeding the drift.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "subloc/halfspace.hpp"
#include "subloc/philox.hpp"
#include "subloc/potential.hpp"
#include "subloc/sampler.hpp"

namespace subloc {

struct LocalizationState {
    double t = 0.0;
    VectorXd c;       // tilt, kept in range(P)
    VectorXd a;       // barycenter of the tilted measure
    MatrixXd K;       // covariance of the tilted measure
    MatrixXd Q;       // k x k, projected covariance in the E_perp basis
    double moment_error = 0.0;
};

struct SetMeasure {
    double s = 0.0;
    double se = 0.0;
};

struct PathRecord {
    std::vector<double> times;
    std::vector<LocalizationState> states;
    std::vector<std::vector<SetMeasure>> set_measures;  // [time][set]
    std::vector<double> qv_bound;  // running sum of |Q_s|_op ds
    MatrixXd brownian_increments;  // one column per step
    double hessian_margin_min = std::numeric_limits<double>::infinity();
    bool censored = false;
    std::string censor_reason;

    int steps() const { return static_cast<int>(times.size()) - 1; }
};

// How moments of the tilted measure are obtained at each grid time.
//   oracle:       Gaussian closed forms, no sampling noise at all
//   exact_sample: draw from the conjugate Gaussian, estimate empirically
//   mala:         Langevin chain on the tilted potential
enum class MomentMode { oracle, exact_sample, mala };

struct RunConfig {
    double T = 1.0;
    double dt = 0.0;  // 0 selects min(0.01, T/100)
    MomentMode mode = MomentMode::exact_sample;
    int count = 4000;
    MalaConfig mala;
    bool exact_sets = false;  // Gaussian modes may score sets by the normal cdf
    int hessian_points = 1;   // batch points per grid time checked for curvature
    std::uint64_t stream_index = 0;
    // called once per recorded grid time with the moment batch (empty in
    // oracle mode), before it is discarded
    std::function<void(const LocalizationState&, const SampleBatch&)> observer;
};

inline double default_dt(double T) { return std::min(0.01, T / 100.0); }

inline SetMeasure set_measure(const SampleBatch& b, const HalfSpace& S) {
    const int m = b.count();
    if (m == 0) throw std::invalid_argument("set_measure: empty batch");
    VectorXd w = b.weighted() ? VectorXd(b.weights / b.weights.sum())
                              : VectorXd::Constant(m, 1.0 / m);
    double frac = 0.0;
    for (int j = 0; j < m; ++j)
        if (S.contains(b.points.col(j))) frac += w(j);
    frac = std::clamp(frac, 0.0, 1.0);
    return {frac, binomial_se(frac, 1.0 / w.squaredNorm())};
}

// Exact Gaussian mass of {x . theta <= m}: one-dimensional marginal.
inline SetMeasure set_measure_gaussian(const VectorXd& a, const MatrixXd& K, const HalfSpace& S) {
    const double mu = a.dot(S.theta);
    const double var = S.theta.dot(K * S.theta);
    if (var <= 0.0) return {mu <= S.m ? 1.0 : 0.0, 0.0};
    return {normal_cdf((S.m - mu) / std::sqrt(var)), 0.0};
}

namespace detail {

struct MomentResult {
    VectorXd a;
    MatrixXd K;
    double err = 0.0;
    SampleBatch batch;  // empty in oracle mode
    double mala_step = 0.0;
};

inline MomentResult tilted_moments(const Potential& p, double t, const VectorXd& c,
                                   const RunConfig& cfg, std::uint64_t seed,
                                   std::uint64_t sample_index, const VectorXd& warm_start,
                                   double carried_step) {
    MomentResult out;
    if (cfg.mode != MomentMode::mala) {
        if (!p.gaussian)
            throw std::logic_error("tilted_moments: closed-form modes need a Gaussian base");
        const auto conj = gaussian_conjugacy(*p.gaussian, p.split.P, t, c);
        if (cfg.mode == MomentMode::oracle) {
            out.a = conj.mean;
            out.K = conj.K;
            return out;
        }
        out.batch = sample_exact_gaussian(conj.K, conj.mean, cfg.count, seed,
                                          replica_stream(cfg.stream_index, sample_index));
        const auto est = estimate_moments(out.batch);
        out.a = est.mean;
        out.K = est.cov;
        out.err = est.mean_se.norm();
        return out;
    }
    const TiltedPotential tp(std::make_shared<const Potential>(p), t, c);
    MalaConfig mc = cfg.mala;
    mc.stream_index = replica_stream(cfg.stream_index, sample_index);
    if (warm_start.size() > 0) {
        mc.init = warm_start;
        if (carried_step > 0.0) {
            mc.step = carried_step;
            mc.tune_rounds = std::min(mc.tune_rounds, 6);
        }
    }
    out.batch = mala_sample(tp, cfg.count, mc, seed);
    out.mala_step = out.batch.step_used;
    const auto est = estimate_moments(out.batch);
    out.a = est.mean;
    out.K = est.cov;
    out.err = est.mean_se.norm();
    return out;
}

inline void record_state(PathRecord& rec, const Potential& p, const RunConfig& cfg,
                         const LocalizationState& st, const MomentResult& mr,
                         const std::vector<HalfSpace>& sets) {
    rec.times.push_back(st.t);
    rec.states.push_back(st);
    std::vector<SetMeasure> sm;
    sm.reserve(sets.size());
    const bool use_exact =
        cfg.mode == MomentMode::oracle || (cfg.exact_sets && p.gaussian);
    if (use_exact && !sets.empty()) {
        const auto conj = gaussian_conjugacy(*p.gaussian, p.split.P, st.t, st.c);
        for (const auto& S : sets) sm.push_back(set_measure_gaussian(conj.mean, conj.K, S));
    } else {
        for (const auto& S : sets) sm.push_back(set_measure(mr.batch, S));
    }
    rec.set_measures.push_back(std::move(sm));

    if (cfg.hessian_points > 0) {
        const TiltedPotential tp(std::make_shared<const Potential>(p), st.t, st.c);
        const double floor = tp.curvature_floor();
        const int avail = mr.batch.count();
        for (int i = 0; i < cfg.hessian_points; ++i) {
            VectorXd x = avail > 0 ? VectorXd(mr.batch.points.col(i % avail)) : st.a;
            if (!p.in_support(x)) continue;
            rec.hessian_margin_min = std::min(
                rec.hessian_margin_min, sym_min_eig(tp.hessian_at(x)) - floor);
        }
    }
}

}  // namespace detail

inline LocalizationState init(const Potential& p, const RunConfig& cfg, std::uint64_t seed) {
    LocalizationState st;
    st.t = 0.0;
    st.c = VectorXd::Zero(p.split.n);
    const auto mr =
        detail::tilted_moments(p, 0.0, st.c, cfg, seed, 0, VectorXd(), 0.0);
    st.a = mr.a;
    st.K = mr.K;
    st.Q = p.split.restrict_perp(mr.K);
    st.moment_error = mr.err;
    return st;
}

inline LocalizationState step(const LocalizationState& s, double dt, const VectorXd& dB,
                              const Potential& p, const RunConfig& cfg, std::uint64_t seed,
                              std::uint64_t sample_index = 1) {
    if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
    LocalizationState next;
    next.t = s.t + dt;
    // projecting the whole update keeps c in range(P) exactly
    next.c = p.split.P * (s.c + dB + s.a * dt);
    const auto mr = detail::tilted_moments(p, next.t, next.c, cfg, seed, sample_index, s.a, 0.0);
    next.a = mr.a;
    next.K = mr.K;
    next.Q = p.split.restrict_perp(mr.K);
    next.moment_error = mr.err;
    return next;
}

inline PathRecord run_path(const Potential& p, const RunConfig& cfg,
                           const std::vector<HalfSpace>& sets, std::uint64_t seed) {
    PathRecord rec;
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(cfg.T);
    const int n_steps = std::max(1, static_cast<int>(std::llround(cfg.T / dt)));
    const int n = p.split.n;
    rec.brownian_increments.resize(n, n_steps);
    Philox brownian(seed, stream_id(streams::kBrownian, cfg.stream_index));

    LocalizationState st;
    double carried_step = 0.0;
    try {
        auto mr = detail::tilted_moments(p, 0.0, VectorXd::Zero(n), cfg, seed, 0, VectorXd(), 0.0);
        st.t = 0.0;
        st.c = VectorXd::Zero(n);
        st.a = mr.a;
        st.K = mr.K;
        st.Q = p.split.restrict_perp(mr.K);
        st.moment_error = mr.err;
        carried_step = mr.mala_step;
        rec.qv_bound.push_back(0.0);
        detail::record_state(rec, p, cfg, st, mr, sets);
        if (cfg.observer) cfg.observer(st, mr.batch);

        const double sqrt_dt = std::sqrt(dt);
        VectorXd dB(n);
        for (int i = 0; i < n_steps; ++i) {
            for (int j = 0; j < n; ++j) dB(j) = sqrt_dt * brownian.normal();
            rec.brownian_increments.col(i) = dB;
            const double qv_inc = sym_opnorm(st.Q) * dt;

            LocalizationState next;
            next.t = (i + 1) * dt;
            next.c = p.split.P * (st.c + dB + st.a * dt);
            auto mr_next = detail::tilted_moments(p, next.t, next.c, cfg, seed,
                                                  static_cast<std::uint64_t>(i) + 1, st.a,
                                                  carried_step);
            next.a = mr_next.a;
            next.K = mr_next.K;
            next.Q = p.split.restrict_perp(mr_next.K);
            next.moment_error = mr_next.err;
            if (mr_next.mala_step > 0.0) carried_step = mr_next.mala_step;

            st = next;
            rec.qv_bound.push_back(rec.qv_bound.back() + qv_inc);
            detail::record_state(rec, p, cfg, st, mr_next, sets);
            if (cfg.observer) cfg.observer(st, mr_next.batch);
        }
    } catch (const std::exception& e) {
        rec.censored = true;
        rec.censor_reason = e.what();
    }
    return rec;
}

// Closed-form replay: same Euler recursion on c, but moments and set masses
// come from the Gaussian conjugate law, no sampling anywhere.
inline PathRecord gaussian_oracle_path(const MatrixXd& sigma, const SubspaceSplit& split,
                                       const MatrixXd& brownian_increments, double dt,
                                       const std::vector<HalfSpace>& sets = {}) {
    const auto p = make_gaussian(sigma, split);
    const int n = split.n;
    const int n_steps = static_cast<int>(brownian_increments.cols());
    PathRecord rec;
    rec.brownian_increments = brownian_increments;

    VectorXd c = VectorXd::Zero(n);
    for (int i = 0; i <= n_steps; ++i) {
        const double t = i * dt;
        const auto conj = gaussian_conjugacy(*p.gaussian, split.P, t, c);
        LocalizationState st;
        st.t = t;
        st.c = c;
        st.a = conj.mean;
        st.K = conj.K;
        st.Q = split.restrict_perp(conj.K);
        rec.times.push_back(t);
        std::vector<SetMeasure> sm;
        for (const auto& S : sets) sm.push_back(set_measure_gaussian(st.a, st.K, S));
        rec.set_measures.push_back(std::move(sm));
        rec.qv_bound.push_back(i == 0 ? 0.0
                                      : rec.qv_bound.back() +
                                            sym_opnorm(rec.states.back().Q) * dt);
        rec.states.push_back(std::move(st));
        if (i < n_steps)
            c = split.P * (c + brownian_increments.col(i) + rec.states.back().a * dt);
    }
    return rec;
}

struct MartingaleCheckReport {
    std::vector<double> times;
    std::vector<double> mean_s;
    std::vector<double> se;
    std::vector<bool> pass_at;
    double s0 = 0.0;
    bool pass = false;
    bool vacuous = false;  // ensemble too small for a standard error
    int paths_used = 0;
};

inline MartingaleCheckReport martingale_check(const std::vector<PathRecord>& ensemble,
                                              int set_index) {
    MartingaleCheckReport rep;
    std::vector<const PathRecord*> live;
    for (const auto& r : ensemble)
        if (!r.censored && !r.times.empty()) live.push_back(&r);
    rep.paths_used = static_cast<int>(live.size());
    if (live.empty()) return rep;
    const std::size_t n_times = live.front()->times.size();
    rep.times = live.front()->times;
    rep.vacuous = live.size() < 2;

    double s0_sum = 0.0;
    for (const auto* r : live) s0_sum += r->set_measures.at(0).at(set_index).s;
    rep.s0 = s0_sum / live.size();

    rep.pass = true;
    for (std::size_t ti = 0; ti < n_times; ++ti) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto* r : live) {
            const double v = r->set_measures.at(ti).at(set_index).s;
            sum += v;
            sum2 += v * v;
        }
        const double m = sum / live.size();
        double se = std::numeric_limits<double>::infinity();
        if (live.size() >= 2) {
            const double var =
                std::max(sum2 / live.size() - m * m, 0.0) * live.size() / (live.size() - 1.0);
            se = std::sqrt(var / live.size());
        }
        const bool ok = rep.vacuous || std::abs(m - rep.s0) <= 3.0 * se;
        rep.mean_s.push_back(m);
        rep.se.push_back(se);
        rep.pass_at.push_back(ok);
        rep.pass = rep.pass && ok;
    }
    return rep;
}

}  // namespace subloc
