// Experiment orchestration: build the measure described by a config, drive the
// localization ensemble, run every checker exactly once, and write the
// columnar outputs, plots and the summary report into one directory.
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "subloc/concentration.hpp"
#include "subloc/config.hpp"
#include "subloc/csv.hpp"
#include "subloc/localization.hpp"
#include "subloc/martingale.hpp"
#include "subloc/potential.hpp"
#include "subloc/report.hpp"
#include "subloc/spectra.hpp"
#include "subloc/svg.hpp"

namespace subloc {

struct BuiltMeasure {
    Potential potential;      // the measure the experiment runs on
    Potential base;           // pre-whitening original, only set when whitened
    bool whitened = false;
    double lambda_transfer = 0.0;  // largest eigenvalue of the whitening map
};

inline BuiltMeasure build_measure(const ExperimentConfig& ec) {
    const SubspaceSplit split = ec.rotated_split
                                    ? SubspaceSplit::rotated(ec.n, ec.k, ec.rotation_seed)
                                    : SubspaceSplit::axis(ec.n, ec.k);
    Potential p;
    if (ec.kind == MeasureKind::gaussian) {
        MatrixXd sigma = MatrixXd::Identity(ec.n, ec.n);
        for (std::size_t i = 0; i < ec.sigma_diag.size(); ++i) sigma(i, i) = ec.sigma_diag[i];
        p = make_gaussian(sigma, split);
    } else {
        if (ec.eta == 0.0 && ec.k < ec.n && ec.truncate_radius == 0.0)
            throw ConfigError("config: measure.eta = 0 leaves flat directions; set measure.truncate");
        FlatStrongW w;
        if (ec.w_kind == "quadratic") {
            MatrixXd A = MatrixXd::Identity(ec.k, ec.k);
            for (std::size_t i = 0; i < ec.w_diag.size(); ++i) A(i, i) = ec.w_diag[i];
            w = FlatStrongW::quadratic(A);
        } else {
            if (ec.w_a4 <= 0.0 && ec.w_a2 <= 0.0)
                throw ConfigError("config: quartic well needs measure.w_a4 or measure.w_a2 > 0");
            w = FlatStrongW::quartic(ec.w_a4, ec.w_a2);
        }
        p = make_flat_strong(ec.eta, w, split);
    }
    if (ec.truncate_radius > 0.0) p = make_truncated(std::move(p), ec.truncate_radius);

    BuiltMeasure out;
    if (ec.whiten) {
        if (!p.gaussian)
            throw ConfigError("config: whiten needs a closed-form covariance (Gaussian law)");
        auto wr = whiten(p, p.gaussian->sigma);
        out.base = std::move(p);
        out.potential = std::move(wr.potential);
        out.whitened = true;
        out.lambda_transfer = wr.lambda_max_S;
    } else {
        out.potential = std::move(p);
    }
    return out;
}

// Which parts of the pipeline run; each stage owns a fixed set of checkers,
// and a report missing a stage's checkers counts as failed overall.
struct StageSet {
    bool potential = true;
    bool ensemble = true;
    bool concentration = true;
    bool freedman = true;

    static StageSet all() { return {}; }
    static StageSet only_potential() { return {true, false, false, false}; }
    static StageSet only_ensemble() { return {false, true, false, false}; }
    static StageSet only_concentration() { return {false, false, true, false}; }
    static StageSet only_freedman() { return {false, false, false, true}; }
};

// Per-time spectral observables of one replica, computed from the moment
// batch before the driver discards it.
struct SpectralRow {
    double t = 0.0;
    VectorXd lambdas;
    double q_opnorm = 0.0;
    double p = 1.0;
    double gamma = 0.0;
    double gamma_root = 0.0;
    double v_norm = 0.0;
    double delta_upper = 0.0;
};

namespace detail {

// json cannot carry infinities; encode them as strings with stable spelling
inline ordered_json json_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    return v;
}

inline SpectralRow spectral_row(const LocalizationState& st, const SampleBatch& batch,
                                const SubspaceSplit& split) {
    SpectralRow row;
    row.t = st.t;
    row.q_opnorm = sym_opnorm(st.Q);
    const auto ss = snapshot(st.Q);
    row.lambdas = ss.lambdas;
    row.p = ss.p;
    row.gamma = ss.gamma;
    row.gamma_root = ss.gamma_root;
    if (batch.count() > 1 && ss.gamma > 0.0) {
        const auto marg = marginal_batch(batch, split);
        const auto tm = third_moments(marg, split.to_perp(st.a), ss.eigvecs);
        const auto dr = drift_terms(ss, tm);
        row.v_norm = dr.v.norm();
        row.delta_upper = dr.delta_upper;
    }
    return row;
}

// Total mass of the tilted density by tensor Simpson quadrature; the analytic
// normalizer makes the answer 1 whenever the closed forms are right.
inline double tilted_mass_quadrature(const TiltedPotential& tp, int points_per_axis = 240) {
    const auto conj = tp.conjugacy();
    const int n = static_cast<int>(conj.mean.size());
    const double w = 9.0 * std::sqrt(sym_opnorm(conj.K));
    if (n == 1) {
        return simpson(
            [&](double x) {
                VectorXd v(1);
                v << x;
                return std::exp(-tp.value(v));
            },
            conj.mean(0) - w, conj.mean(0) + w, points_per_axis);
    }
    if (n == 2) {
        return simpson(
            [&](double x) {
                return simpson(
                    [&](double y) {
                        VectorXd v(2);
                        v << x, y;
                        return std::exp(-tp.value(v));
                    },
                    conj.mean(1) - w, conj.mean(1) + w, points_per_axis);
            },
            conj.mean(0) - w, conj.mean(0) + w, points_per_axis);
    }
    throw std::logic_error("tilted_mass_quadrature: only n <= 2");
}

inline MalaConfig mala_config_of(const ExperimentConfig& ec, std::uint32_t stream) {
    MalaConfig mc;
    mc.step = ec.mala_step;
    mc.warmup = ec.mala_warmup;
    mc.thinning = ec.mala_thinning;
    mc.stream_index = stream;
    return mc;
}

inline SampleBatch sample_measure(const Potential& pot, int count, std::uint32_t stream,
                                  const ExperimentConfig& ec) {
    if (pot.gaussian)
        return sample_exact_gaussian(pot.gaussian->sigma, VectorXd::Zero(pot.split.n), count,
                                     ec.seed, stream);
    return mala_sample(pot, count, mala_config_of(ec, stream), ec.seed);
}

inline SampleBatch sample_tilted(const Potential& pot, double t, const VectorXd& c, int count,
                                 std::uint32_t stream, const ExperimentConfig& ec) {
    if (pot.gaussian) {
        const auto conj = gaussian_conjugacy(*pot.gaussian, pot.split.P, t, c);
        return sample_exact_gaussian(conj.K, conj.mean, count, ec.seed, stream);
    }
    const TiltedPotential tp(std::make_shared<const Potential>(pot), t, c);
    return mala_sample(tp, count, mala_config_of(ec, stream), ec.seed);
}

inline std::vector<HalfSpace> make_sets(const ExperimentConfig& ec, const Potential& pot,
                                        const SampleBatch& pilot) {
    std::vector<HalfSpace> sets;
    const int n = pot.split.n;
    for (int i = 0; i < std::min(ec.sets_axes, n); ++i)
        sets.push_back(median_halfspace(pilot, VectorXd::Unit(n, i)));
    Philox rng(ec.seed, stream_id(streams::kGlobal, 7));
    for (int i = 0; i < ec.sets_random; ++i)
        sets.push_back(median_halfspace(pilot, random_unit_vector(n, rng)));
    return sets;
}

}  // namespace detail

struct ExperimentResult {
    Report report;
    std::vector<PathRecord> ensemble;
    std::vector<HalfSpace> sets;
    ConcentrationCurve curve;
    double q_norm0 = 0.0;
    bool whitened = false;
    double lambda_transfer = 0.0;
};

// Exit code convention: a full run demands every checker present and none
// failed; a partial run only demands that the checkers it ran did not fail.
inline int experiment_exit_code(const Report& report, bool require_complete) {
    if (require_complete) return report.hard_pass() ? 0 : 1;
    for (const auto& name : Report::registry())
        if (report.has(name) && report.get(name).status == CheckStatus::fail) return 1;
    return 0;
}

inline ExperimentResult run_experiment(const ExperimentConfig& ec, const std::string& out_dir,
                                       const StageSet& stages = StageSet::all(),
                                       bool quiet = false) {
    namespace fs = std::filesystem;
    const fs::path out(out_dir);
    fs::create_directories(out / "plots");

    const BuiltMeasure bm = build_measure(ec);
    const Potential& pot = bm.potential;
    const SubspaceSplit& split = pot.split;
    const int n = split.n, k = split.k;
    const double p_exp = default_p(k);
    const std::vector<double> radii = ec.radii();

    if (!pot.gaussian && ec.mode != "mala")
        throw ConfigError("config: run.mode = " + ec.mode +
                          " needs a Gaussian law; use run.mode = mala");

    {
        std::ofstream f(out / "effective.cfg", std::ios::binary);
        if (!f) throw std::runtime_error("run_experiment: cannot write effective.cfg");
        f << ec.effective().serialize();
    }

    RunConfig rc;
    rc.T = ec.T;
    rc.dt = ec.dt;
    rc.mode = ec.mode == "oracle" ? MomentMode::oracle
              : ec.mode == "exact" ? MomentMode::exact_sample
                                   : MomentMode::mala;
    rc.count = (ec.mode == "mala" && ec.mala_count > 0) ? ec.mala_count : ec.count;
    rc.mala = detail::mala_config_of(ec, 0);
    rc.exact_sets = ec.exact_sets;
    rc.hessian_points = ec.hessian_points;

    const bool need_paths = stages.ensemble || stages.potential;
    const int n_paths = stages.ensemble ? ec.replicas : 1;

    // exact when closed forms exist, otherwise estimated from the first batch
    double q_norm0 = 0.0;
    if (pot.gaussian) q_norm0 = sym_opnorm(split.restrict_perp(pot.gaussian->sigma));

    std::map<std::string, CheckResult> results;
    const auto put = [&](const std::string& name, CheckStatus status, ordered_json details,
                         std::string note = "") {
        results[name] = CheckResult{name, status, std::move(details), std::move(note)};
    };

    // ---- paths --------------------------------------------------------
    std::vector<HalfSpace> sets;
    std::vector<PathRecord> ensemble;
    std::vector<std::vector<SpectralRow>> spectral;
    std::vector<int> live;
    if (need_paths) {
        const auto sets_pilot = detail::sample_measure(
            pot, std::min(ec.conc_samples, 20000), replica_stream(0xffff, 4), ec);
        sets = detail::make_sets(ec, pot, sets_pilot);
        if (!(q_norm0 > 0.0))
            q_norm0 = sym_opnorm(split.restrict_perp(estimate_moments(sets_pilot).cov));

        if (!quiet)
            std::cout << "paths: " << n_paths << " x T=" << ec.T << " mode=" << ec.mode << "\n";
        spectral.resize(n_paths);
        for (int r = 0; r < n_paths; ++r) {
            RunConfig rcr = rc;
            rcr.stream_index = static_cast<std::uint64_t>(r);
            rcr.observer = [&spectral, &split, r](const LocalizationState& st,
                                                  const SampleBatch& b) {
                spectral[r].push_back(detail::spectral_row(st, b, split));
            };
            ensemble.push_back(run_path(pot, rcr, sets, ec.seed));
        }
        for (int r = 0; r < n_paths; ++r)
            if (!ensemble[r].censored && !ensemble[r].times.empty()) live.push_back(r);
        if (live.empty()) throw std::runtime_error("run_experiment: every path was censored: " +
                                                   ensemble.front().censor_reason);
    }

    // ---- potential stage ------------------------------------------------
    if (stages.potential) {
        {
            ordered_json d;
            if (pot.gaussian && n <= 2) {
                const auto& probe = ensemble[live.front()];
                const std::size_t last = probe.times.size() - 1;
                double worst = 0.0;
                ordered_json rows = ordered_json::array();
                for (const std::size_t i : {std::size_t{0}, last / 2, last}) {
                    const TiltedPotential tp(std::make_shared<const Potential>(pot),
                                             probe.times[i], probe.states[i].c);
                    const double mass = detail::tilted_mass_quadrature(tp);
                    worst = std::max(worst, std::abs(mass - 1.0));
                    rows.push_back({{"t", probe.times[i]}, {"mass", mass}});
                }
                d["points"] = rows;
                d["max_abs_dev"] = worst;
                d["tol"] = 1e-5;
                put("mass_conservation", worst <= 1e-5 ? CheckStatus::pass : CheckStatus::fail,
                    d);
            } else {
                d["reason"] = pot.gaussian ? "quadrature limited to n <= 2"
                                           : "no closed-form normalizer to test against";
                put("mass_conservation", CheckStatus::skipped, d,
                    "masses enter the process only as ratios");
            }
        }
        {
            const auto hyp = verify_hypothesis(pot, 200, ec.seed);
            double margin = std::numeric_limits<double>::infinity();
            for (const auto& rec : ensemble) margin = std::min(margin, rec.hessian_margin_min);
            ordered_json d;
            d["hypothesis_min_restricted_eig"] = detail::json_num(hyp.min_restricted_eig);
            d["hypothesis_min_full_eig"] = detail::json_num(hyp.min_full_eig);
            d["max_gradient_rel_err"] = hyp.max_gradient_rel_err;
            d["eta"] = detail::json_num(pot.eta);
            d["tilted_margin_min"] = detail::json_num(margin);
            if (std::isinf(margin))
                put("tilted_hessian_bound", CheckStatus::insufficient, d,
                    "no curvature points sampled; set run.hessian_points");
            else
                put("tilted_hessian_bound",
                    hyp.pass && margin >= -1e-6 ? CheckStatus::pass : CheckStatus::fail, d);
        }
    }

    // ---- ensemble stage -------------------------------------------------
    if (stages.ensemble) {
        {
            ordered_json d;
            if (pot.gaussian) {
                double max_err = 0.0, mean_err = 0.0;
                long terms = 0;
                for (const int r : live) {
                    const auto& rec = ensemble[r];
                    for (std::size_t i = 0; i < rec.times.size(); ++i) {
                        const auto conj = gaussian_conjugacy(*pot.gaussian, split.P,
                                                             rec.times[i], rec.states[i].c);
                        const double err = (rec.states[i].K - conj.K).norm();
                        max_err = std::max(max_err, err);
                        mean_err += err;
                        ++terms;
                    }
                }
                d["max_frobenius_err"] = max_err;
                d["mean_frobenius_err"] = terms > 0 ? mean_err / terms : 0.0;
                d["tol"] = ec.replay_tol;
                put("gaussian_conjugacy_replay",
                    max_err <= ec.replay_tol ? CheckStatus::pass : CheckStatus::fail, d);
            } else {
                put("gaussian_conjugacy_replay", CheckStatus::skipped, d,
                    "no closed-form covariance flow for this law");
            }
        }
        {
            ordered_json per_set = ordered_json::array();
            bool all = true, vacuous = false;
            for (std::size_t si = 0; si < sets.size(); ++si) {
                const auto mc = martingale_check(ensemble, static_cast<int>(si));
                vacuous = vacuous || mc.vacuous;
                all = all && mc.pass;
                double max_z = 0.0;
                for (std::size_t i = 0; i < mc.mean_s.size(); ++i)
                    if (mc.se[i] > 0.0 && std::isfinite(mc.se[i]))
                        max_z = std::max(max_z, std::abs(mc.mean_s[i] - mc.s0) / mc.se[i]);
                per_set.push_back({{"set", si},
                                   {"s0", mc.s0},
                                   {"max_z", max_z},
                                   {"pass", mc.pass || mc.vacuous}});
            }
            ordered_json d;
            d["sets"] = per_set;
            d["paths"] = static_cast<int>(live.size());
            if (vacuous || live.size() < 2)
                put("martingale_set_mass", CheckStatus::insufficient, d,
                    "need at least two replicas for a standard error");
            else
                put("martingale_set_mass", all ? CheckStatus::pass : CheckStatus::fail, d);
        }
        {
            ordered_json per_set = ordered_json::array();
            double worst = 0.0;
            for (std::size_t si = 0; si < sets.size(); ++si) {
                double emp = 0.0, bound = 0.0;
                for (const int r : live) {
                    const auto path = set_mass_martingale(ensemble[r], static_cast<int>(si), false);
                    emp += path.qv.back();
                    bound += ensemble[r].qv_bound.back();
                }
                const double ratio = bound > 0.0 ? emp / bound : 0.0;
                worst = std::max(worst, ratio);
                per_set.push_back({{"set", si}, {"qv_ratio", ratio}});
            }
            ordered_json d;
            d["sets"] = per_set;
            d["worst_ratio"] = worst;
            d["slack"] = ec.qv_slack;
            put("qv_domination",
                worst <= 1.0 + ec.qv_slack ? CheckStatus::pass : CheckStatus::fail, d);
        }
        {
            ordered_json d;
            bool applies = false;
            if (pot.gaussian) {
                const MatrixXd Q0 = split.restrict_perp(pot.gaussian->sigma);
                const double iso_dev =
                    (Q0 - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
                double cross_dev = 0.0;
                if (k < n)
                    cross_dev = (split.basis_perp().transpose() * pot.gaussian->sigma *
                                 split.basis_E())
                                    .cwiseAbs()
                                    .maxCoeff();
                applies = iso_dev <= 1e-9 && cross_dev <= 1e-9;
            }
            if (applies) {
                const auto gamma_at = [&](double t) {
                    const auto conj =
                        gaussian_conjugacy(*pot.gaussian, split.P, t, VectorXd::Zero(n));
                    return snapshot(split.restrict_perp(conj.K)).gamma;
                };
                const double h = 1e-4;
                double max_rel = 0.0;
                for (const double t : {0.25 * ec.T, 0.5 * ec.T, ec.T}) {
                    const double fd = (gamma_at(t + h) - gamma_at(t - h)) / (2.0 * h);
                    const double closed = -p_exp * k / std::pow(1.0 + t, p_exp + 1.0);
                    max_rel = std::max(max_rel, std::abs(fd - closed) / std::abs(closed));
                }
                double ens_dev = 0.0;
                if (!live.empty()) {
                    const std::size_t n_times = ensemble[live.front()].times.size();
                    for (std::size_t i = 0; i < n_times; ++i) {
                        double mean = 0.0;
                        for (const int r : live) mean += spectral[r][i].gamma;
                        mean /= live.size();
                        const double t = ensemble[live.front()].times[i];
                        const double closed = k / std::pow(1.0 + t, p_exp);
                        ens_dev = std::max(ens_dev, std::abs(mean - closed) / closed);
                    }
                }
                d["fd_max_rel_err"] = max_rel;
                d["tol"] = 1e-4;
                d["ensemble_max_rel_dev"] = ens_dev;
                put("spectral_drift_identity",
                    max_rel <= 1e-4 ? CheckStatus::pass : CheckStatus::fail, d);
            } else {
                d["reason"] = pot.gaussian
                                  ? "projected covariance not isotropic at t = 0"
                                  : "no closed-form covariance flow for this law";
                put("spectral_drift_identity", CheckStatus::skipped, d);
            }
        }
        {
            std::vector<std::pair<double, double>> series;
            std::vector<DeltaPoint> dseries;
            for (const auto& rows : spectral)
                for (const auto& row : rows) {
                    series.emplace_back(row.v_norm, row.gamma_root);
                    dseries.push_back({row.delta_upper, row.gamma, row.p});
                }
            const auto vb = check_vt_bound(series, ec.c_max);
            ordered_json d;
            d["fitted_c"] = vb.fitted;
            d["c_max"] = vb.threshold;
            d["points"] = vb.points;
            put("vt_bound", vb.pass ? CheckStatus::pass : CheckStatus::fail, d,
                rc.mode == MomentMode::oracle ? "closed-form third moments vanish; bound vacuous"
                                              : "");
            const auto db = check_delta_bound(dseries, ec.psi_k, ec.delta_tol_mc);
            ordered_json dd;
            dd["fitted_ratio"] = db.fitted;
            dd["threshold"] = db.threshold;
            dd["psi_k"] = ec.psi_k;
            put("delta_bound", db.pass ? CheckStatus::pass : CheckStatus::fail, dd,
                k <= 2 ? "p = 1 makes the drift correction vanish identically" : "");
        }
        {
            const double threshold =
                ec.exit_threshold > 0.0 ? ec.exit_threshold : 10.0 * q_norm0;
            const auto stats = exit_time_stats(ensemble, threshold, ec.c1_reference);
            ordered_json d;
            d["threshold"] = threshold;
            d["paths"] = stats.paths;
            d["final_exceed_prob"] = stats.exceed_prob.empty() ? 0.0 : stats.exceed_prob.back();
            d["final_upper95"] = stats.upper95.empty() ? 0.0 : stats.upper95.back();
            d["final_reference"] = stats.reference.empty() ? 0.0 : stats.reference.back();
            put("covariance_exit_time", CheckStatus::report, d,
                "constants in the exit-time bound are not pinned; reported for inspection");

            CsvTable table({"t", "mean_gamma", "mean_gamma_root", "mean_v_norm", "max_v_norm",
                            "mean_delta_upper", "max_delta_upper", "exceed_prob",
                            "exceed_upper95", "exit_reference"});
            const std::size_t n_times = ensemble[live.front()].times.size();
            for (std::size_t i = 0; i < n_times; ++i) {
                double mg = 0.0, mgr = 0.0, mv = 0.0, xv = 0.0, md = 0.0, xd = 0.0;
                for (const int r : live) {
                    const auto& row = spectral[r][i];
                    mg += row.gamma;
                    mgr += row.gamma_root;
                    mv += row.v_norm;
                    xv = std::max(xv, row.v_norm);
                    md += row.delta_upper;
                    xd = std::max(xd, row.delta_upper);
                }
                const double m = static_cast<double>(live.size());
                table.add_numeric_row({stats.times[i], mg / m, mgr / m, mv / m, xv, md / m, xd,
                                       stats.exceed_prob[i], stats.upper95[i],
                                       stats.reference[i]});
            }
            table.save((out / "spectra.csv").string());
        }
    }

    // ---- concentration stage ---------------------------------------------
    ConcentrationCurve curve;
    if (stages.concentration) {
        const auto pilot =
            detail::sample_measure(pot, ec.conc_samples, replica_stream(0xffff, 0), ec);
        const auto est = estimate_moments(pilot);
        if (!(q_norm0 > 0.0)) q_norm0 = sym_opnorm(split.restrict_perp(est.cov));
        const MatrixXd& fam_cov = pot.gaussian ? pot.gaussian->sigma : est.cov;
        curve = alpha_curve(pilot, direction_family(fam_cov, ec.conc_directions, ec.seed), radii);

        {
            const double t_strong = std::min(pot.eta, ec.T);
            ordered_json d;
            if (!(t_strong > 0.0)) {
                d["reason"] = "no curvature at the time horizon";
                put("strong_logconcave_concentration", CheckStatus::skipped, d);
            } else {
                double t_tilt = ec.T;
                VectorXd c_tilt = VectorXd::Zero(n);
                if (!live.empty()) {
                    const auto& rec = ensemble[live.front()];
                    t_tilt = rec.times.back();
                    c_tilt = rec.states.back().c;
                }
                const auto tilted = detail::sample_tilted(pot, t_tilt, c_tilt, ec.conc_samples,
                                                          replica_stream(0xffff, 1), ec);
                std::vector<HalfSpace> tsets = detail::make_sets(ec, pot, tilted);
                const double t_eff = std::min(pot.eta, t_tilt);
                const auto rep = check_strong_logconcave_bound(tilted, tsets, t_eff, radii);
                double worst = -std::numeric_limits<double>::infinity();
                for (const auto& row : rep.rows)
                    worst = std::max(worst, row.empirical - row.bound - 3.0 * row.se);
                d["t"] = t_eff;
                d["tilt_time"] = t_tilt;
                d["sets"] = static_cast<int>(tsets.size());
                d["rows"] = static_cast<int>(rep.rows.size());
                d["max_excess"] = worst;
                put("strong_logconcave_concentration",
                    rep.pass ? CheckStatus::pass : CheckStatus::fail, d);
            }
        }
        {
            const auto mt = check_main_theorem(curve, pot.eta, k, q_norm0, ec.psi_k);
            ordered_json d;
            d["fitted_prefactor"] = mt.fitted_prefactor;
            d["min_tail_ratio"] = mt.min_tail_ratio;
            d["monotone"] = mt.monotone;
            d["eta"] = detail::json_num(pot.eta);
            d["q_norm"] = q_norm0;
            put("main_theorem_shape", mt.pass ? CheckStatus::pass : CheckStatus::fail, d,
                "prefactor is fitted and reported, never asserted");

            LinePlot plot("concentration over half-spaces", "r", "alpha", true);
            plot.add("alpha", radii, curve.alpha);
            std::vector<double> fit, gm;
            for (std::size_t i = 0; i < radii.size(); ++i) {
                fit.push_back(std::exp(-mt.fitted_prefactor * mt.envelope[i]));
                gm.push_back(std::exp(-radii[i] / 3.0));
            }
            plot.add("envelope fit", radii, fit);
            plot.add("exp(-r/3)", radii, gm);
            plot.save((out / "plots" / "alpha.svg").string());
        }
        {
            ordered_json d;
            try {
                const auto px = poincare_proxies(curve, est.cov, pot.eta, q_norm0, k, ec.psi_k);
                d["alpha_inv_quarter"] = px.alpha_inv_quarter;
                d["rayleigh_lower"] = px.rayleigh_lower;
                d["theorem_rhs"] = detail::json_num(px.theorem_rhs);
                put("poincare_proxies", CheckStatus::report, d,
                    "two-sided proxies for the Poincare constant; no sharp assertion");
            } catch (const std::exception& e) {
                d["reason"] = e.what();
                put("poincare_proxies", CheckStatus::insufficient, d, "increase radii.max");
            }
        }
        {
            ordered_json d;
            const Potential& mu = bm.whitened ? bm.base : pot;
            if (mu.gaussian) {
                const auto wr = whiten(mu, mu.gaussian->sigma);
                const auto batch_mu = sample_exact_gaussian(mu.gaussian->sigma, VectorXd::Zero(n),
                                                            ec.conc_samples, ec.seed,
                                                            replica_stream(0xffff, 2));
                const auto batch_w = sample_exact_gaussian(wr.potential.gaussian->sigma,
                                                           VectorXd::Zero(n), ec.conc_samples,
                                                           ec.seed, replica_stream(0xffff, 3));
                std::vector<double> scaled;
                for (const double r : radii) scaled.push_back(r / wr.lambda_max_S);
                const auto cm = alpha_curve(
                    batch_mu, direction_family(mu.gaussian->sigma, ec.conc_directions, ec.seed),
                    radii);
                const auto cw = alpha_curve(
                    batch_w,
                    direction_family(wr.potential.gaussian->sigma, ec.conc_directions, ec.seed),
                    scaled);
                double max_excess = -std::numeric_limits<double>::infinity();
                bool ok = true;
                for (std::size_t i = 0; i < radii.size(); ++i) {
                    const double excess =
                        cm.alpha[i] - cw.alpha[i] - 3.0 * (cm.se[i] + cw.se[i]);
                    max_excess = std::max(max_excess, excess);
                    ok = ok && excess <= 0.0;
                }
                d["lambda_max_S"] = wr.lambda_max_S;
                d["max_excess"] = max_excess;
                put("whitening_transfer", ok ? CheckStatus::pass : CheckStatus::fail, d);
            } else {
                d["reason"] = "transfer needs exact sampling of both laws";
                put("whitening_transfer", CheckStatus::insufficient, d);
            }
        }
        {
            const auto lt = lipschitz_tail(
                pilot, [](const VectorXd& x) { return x.norm(); }, 1.0, radii);
            double max_excess = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < radii.size(); ++i)
                max_excess = std::max(
                    max_excess, lt.tail[i] - curve.alpha[i] - 3.0 * (lt.se[i] + curve.se[i]));
            ordered_json d;
            d["g"] = "euclidean norm";
            d["lipschitz_constant"] = 1.0;
            d["median"] = lt.median;
            d["max_excess_over_alpha"] = max_excess;
            if (pot.gaussian)
                put("lipschitz_tail", max_excess <= 0.0 ? CheckStatus::pass : CheckStatus::fail,
                    d, "half-spaces are extremal for Gaussian laws");
            else
                put("lipschitz_tail", CheckStatus::report, d,
                    "half-space extremality not guaranteed for this law; reported only");
        }

        CsvTable table({"r", "alpha", "se", "worst_direction_index"});
        for (std::size_t i = 0; i < curve.radii.size(); ++i)
            table.add_numeric_row({curve.radii[i], curve.alpha[i], curve.se[i],
                                   static_cast<double>(curve.worst_direction[i])});
        table.save((out / "curves.csv").string());
    }

    // ---- freedman stage --------------------------------------------------
    if (stages.freedman) {
        ordered_json d;
        if (ec.freedman_paths < 100) {
            d["reason"] = "need at least 100 paths";
            put("freedman_tail", CheckStatus::insufficient, d);
            put("exponential_supermartingale", CheckStatus::insufficient, d);
        } else {
            const double fdt = std::min(0.01, ec.freedman_T / 100.0);
            const auto bpaths = brownian_paths(ec.freedman_paths, ec.freedman_T, fdt,
                                               ec.seed + 1000003);
            const auto tc = empirical_tail(bpaths, ec.freedman_a, ec.freedman_b, ec.freedman_T);
            d["a"] = ec.freedman_a;
            d["b"] = ec.freedman_b;
            d["T"] = ec.freedman_T;
            d["fraction"] = tc.fraction;
            d["se"] = tc.se;
            d["bound"] = tc.bound;
            d["paths"] = tc.paths;
            bool pass = tc.pass;
            if (live.size() >= 100) {
                std::vector<MartingalePath> sm;
                for (const int r : live) sm.push_back(set_mass_martingale(ensemble[r], 0));
                const double T_grid = sm.front().times.back();
                const auto app = empirical_tail(sm, 0.25, 10.0 * T_grid, T_grid);
                d["set_mass_a"] = 0.25;
                d["set_mass_b"] = 10.0 * T_grid;
                d["set_mass_fraction"] = app.fraction;
                d["set_mass_bound"] = app.bound;
                pass = pass && app.pass;
            }
            put("freedman_tail", pass ? CheckStatus::pass : CheckStatus::fail, d);

            const auto checks = exponential_supermartingale_check(bpaths, ec.lambdas);
            ordered_json per_lambda = ordered_json::array();
            bool all = true;
            LinePlot plot("exponential supermartingale means", "t",
                          "E exp(lambda M - lambda^2/2 [M])");
            for (const auto& chk : checks) {
                double worst = 0.0;
                for (const double m : chk.mean) worst = std::max(worst, m);
                per_lambda.push_back(
                    {{"lambda", chk.lambda}, {"max_mean", worst}, {"pass", chk.pass}});
                all = all && chk.pass;
                plot.add("lambda " + csv_num(chk.lambda), chk.times, chk.mean);
            }
            ordered_json ds;
            ds["brownian"] = per_lambda;
            if (live.size() >= 2) {
                std::vector<MartingalePath> sm;
                for (const int r : live) sm.push_back(set_mass_martingale(ensemble[r], 0));
                const auto schecks = exponential_supermartingale_check(sm, ec.lambdas);
                ordered_json per = ordered_json::array();
                for (const auto& chk : schecks) {
                    double worst = 0.0;
                    for (const double m : chk.mean) worst = std::max(worst, m);
                    per.push_back(
                        {{"lambda", chk.lambda}, {"max_mean", worst}, {"pass", chk.pass}});
                    all = all && chk.pass;
                }
                ds["set_mass"] = per;
            }
            put("exponential_supermartingale", all ? CheckStatus::pass : CheckStatus::fail, ds);
            plot.save((out / "plots" / "supermartingale.svg").string());
        }
    }

    // ---- per-time path table and ensemble plots ---------------------------
    if (need_paths) {
        std::vector<std::string> header = {"replica", "t"};
        for (int i = 1; i <= k; ++i) header.push_back("c_" + std::to_string(i));
        for (int i = 1; i <= n; ++i) header.push_back("a_" + std::to_string(i));
        for (int i = 1; i <= k; ++i)
            for (int j = 1; j <= k; ++j)
                header.push_back("q_" + std::to_string(i) + "_" + std::to_string(j));
        header.push_back("q_opnorm");
        for (std::size_t s = 1; s <= sets.size(); ++s) header.push_back("s_" + std::to_string(s));
        for (std::size_t s = 1; s <= sets.size(); ++s)
            header.push_back("s_se_" + std::to_string(s));
        header.push_back("qv_bound");
        for (int i = 1; i <= k; ++i) header.push_back("lambda_" + std::to_string(i));
        header.push_back("gamma");
        header.push_back("v_norm");
        header.push_back("delta_upper");
        CsvTable table(header);
        for (int r = 0; r < n_paths; ++r) {
            const auto& rec = ensemble[r];
            const std::size_t rows = std::min(rec.times.size(), spectral[r].size());
            for (std::size_t i = 0; i < rows; ++i) {
                std::vector<double> row = {static_cast<double>(r), rec.times[i]};
                const VectorXd cp = split.to_perp(rec.states[i].c);
                for (int j = 0; j < k; ++j) row.push_back(cp(j));
                for (int j = 0; j < n; ++j) row.push_back(rec.states[i].a(j));
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) row.push_back(rec.states[i].Q(a, b));
                row.push_back(spectral[r][i].q_opnorm);
                for (const auto& sm : rec.set_measures[i]) row.push_back(sm.s);
                for (const auto& sm : rec.set_measures[i]) row.push_back(sm.se);
                row.push_back(rec.qv_bound[i]);
                for (int j = 0; j < k; ++j) row.push_back(spectral[r][i].lambdas(j));
                row.push_back(spectral[r][i].gamma);
                row.push_back(spectral[r][i].v_norm);
                row.push_back(spectral[r][i].delta_upper);
                table.add_numeric_row(row);
            }
        }
        table.save((out / "paths.csv").string());
    }
    if (stages.ensemble && !live.empty()) {
        const auto& times = ensemble[live.front()].times;
        LinePlot masses("set masses along the ensemble", "t", "mean s_t");
        for (std::size_t si = 0; si < sets.size(); ++si) {
            const auto mc = martingale_check(ensemble, static_cast<int>(si));
            masses.add("set " + std::to_string(si), mc.times, mc.mean_s);
        }
        masses.save((out / "plots" / "set_mass.svg").string());

        LinePlot gplot("spectral potential decay", "t", "gamma");
        std::vector<double> mean_gamma;
        for (std::size_t i = 0; i < times.size(); ++i) {
            double mg = 0.0;
            for (const int r : live) mg += spectral[r][i].gamma;
            mean_gamma.push_back(mg / live.size());
        }
        gplot.add("ensemble mean", times, mean_gamma);
        if (pot.gaussian) {
            std::vector<double> closed;
            for (const double t : times) closed.push_back(k / std::pow(1.0 + t, p_exp));
            gplot.add("isotropic closed form", times, closed);
        }
        gplot.save((out / "plots" / "gamma.svg").string());
    }

    // ---- report ------------------------------------------------------------
    ExperimentResult result;
    result.ensemble = std::move(ensemble);
    result.sets = std::move(sets);
    result.curve = std::move(curve);
    result.q_norm0 = q_norm0;
    result.whitened = bm.whitened;
    result.lambda_transfer = bm.lambda_transfer;

    ordered_json meta;
    meta["kind"] = ec.kind == MeasureKind::gaussian ? "gaussian" : "flat_strong";
    meta["n"] = n;
    meta["k"] = k;
    meta["p"] = p_exp;
    meta["eta"] = detail::json_num(pot.eta);
    meta["whitened"] = bm.whitened;
    meta["lambda_transfer"] = bm.lambda_transfer;
    meta["mode"] = ec.mode;
    meta["T"] = ec.T;
    meta["replicas"] = stages.ensemble ? ec.replicas : (need_paths ? 1 : 0);
    meta["live_paths"] = static_cast<int>(live.size());
    meta["seed"] = ec.seed;
    meta["q_norm0"] = q_norm0;
    meta["sets"] = static_cast<int>(result.sets.size());
    result.report.meta("experiment", meta);

    for (const auto& name : Report::registry())
        if (results.count(name)) result.report.add(results.at(name));
    result.report.save((out / "summary.json").string(), (out / "summary.txt").string());
    if (!quiet) std::cout << result.report.to_text();
    return result;
}

}  // namespace subloc
