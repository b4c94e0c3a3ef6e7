// Acceptance gate: every release-level guarantee of the harness, one line of
// output per criterion, exit 0 only when all of them hold.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "subloc/experiment.hpp"

using namespace subloc;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> out;
    for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * i / (count - 1.0));
    return out;
}

struct EnsembleRows {
    std::vector<PathRecord> recs;
    std::vector<SpectralRow> rows;
    int censored = 0;
};

EnsembleRows run_ensemble(const Potential& pot, const RunConfig& rc, int replicas,
                          std::uint64_t seed, const std::vector<HalfSpace>& sets = {}) {
    EnsembleRows out;
    for (int r = 0; r < replicas; ++r) {
        RunConfig rcr = rc;
        rcr.stream_index = static_cast<std::uint64_t>(r);
        rcr.observer = [&out, &pot](const LocalizationState& st, const SampleBatch& b) {
            out.rows.push_back(detail::spectral_row(st, b, pot.split));
        };
        out.recs.push_back(run_path(pot, rcr, sets, seed));
        if (out.recs.back().censored) ++out.censored;
    }
    return out;
}

// 1. Covariance replay: a sampled moment path on the standard Gaussian in four
// dimensions must track the closed-form covariance flow on the whole grid.
Criterion covariance_replay() {
    const auto split = SubspaceSplit::axis(4, 2);
    const auto pot = make_gaussian(MatrixXd::Identity(4, 4), split);
    RunConfig rc;
    rc.T = 2.0;
    rc.dt = 0.005;
    rc.mode = MomentMode::mala;
    rc.count = 10000;
    rc.mala.thinning = 5;
    rc.mala.warmup = 200;
    const auto rec = run_path(pot, rc, {}, 101);
    double max_err = 0.0;
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
        const auto conj = gaussian_conjugacy(*pot.gaussian, split.P, rec.times[i],
                                             rec.states[i].c);
        max_err = std::max(max_err, (rec.states[i].K - conj.K).norm());
    }
    Criterion c;
    c.pass = !rec.censored && rec.times.back() >= 2.0 - 1e-9 && max_err <= 0.1;
    c.detail = "max |K_t - closed form|_F = " + fmt(max_err) + " over " +
               std::to_string(rec.times.size()) + " grid times (tol 0.1)" +
               (rec.censored ? "; path censored: " + rec.censor_reason : "");
    return c;
}

// 2. Tilted mass: with the analytic normalizer, the tilted density integrates
// to 1 for every probed (t, c) pair.
Criterion tilted_mass() {
    const auto split = SubspaceSplit::axis(1, 1);
    const auto pot = std::make_shared<const Potential>(
        make_gaussian(MatrixXd::Identity(1, 1), split));
    double worst = 0.0;
    for (const double t : {0.0, 1.0, 3.0})
        for (const double cv : {0.0, 2.0}) {
            const TiltedPotential tp(pot, t, VectorXd::Constant(1, cv));
            worst = std::max(worst,
                             std::abs(detail::tilted_mass_quadrature(tp, 400) - 1.0));
        }
    Criterion c;
    c.pass = worst <= 1e-6;
    c.detail = "max |mass - 1| = " + fmt(worst) + " over 6 tilts (tol 1e-06)";
    return c;
}

struct MartingaleEnsembles {
    EnsembleRows gauss;
    EnsembleRows quartic;
    bool gauss_pass = false, quartic_pass = false;
    double gauss_z = 0.0, quartic_z = 0.0;
};

const MartingaleEnsembles& martingale_ensembles() {
    static const MartingaleEnsembles me = [] {
        MartingaleEnsembles out;

        const auto gsplit = SubspaceSplit::axis(2, 1);
        const auto gpot = make_gaussian(MatrixXd::Identity(2, 2), gsplit);
        const auto gpilot = sample_exact_gaussian(MatrixXd::Identity(2, 2), VectorXd::Zero(2),
                                                  20000, 303, replica_stream(0xfffe, 0));
        const std::vector<HalfSpace> gsets = {median_halfspace(gpilot, VectorXd::Unit(2, 0))};
        RunConfig grc;
        grc.T = 1.0;
        grc.dt = 0.01;
        grc.mode = MomentMode::exact_sample;
        grc.count = 600;
        grc.exact_sets = true;
        out.gauss = run_ensemble(gpot, grc, 500, 303, gsets);

        const auto qsplit = SubspaceSplit::axis(2, 1);
        const auto qpot = make_flat_strong(1.0, FlatStrongW::quartic(1.0, 0.0), qsplit);
        MalaConfig pm;
        pm.stream_index = replica_stream(0xfffe, 1);
        const auto qpilot = mala_sample(qpot, 8000, pm, 304);
        const std::vector<HalfSpace> qsets = {median_halfspace(qpilot, VectorXd::Unit(2, 0))};
        RunConfig qrc;
        qrc.T = 0.5;
        qrc.dt = 0.01;
        qrc.mode = MomentMode::mala;
        qrc.count = 400;
        qrc.mala.warmup = 150;
        out.quartic = run_ensemble(qpot, qrc, 500, 304, qsets);

        const auto score = [](const std::vector<PathRecord>& recs, bool& pass) {
            const auto mc = martingale_check(recs, 0);
            pass = mc.pass && !mc.vacuous;
            double max_z = 0.0;
            for (std::size_t i = 0; i < mc.mean_s.size(); ++i)
                if (mc.se[i] > 0.0)
                    max_z = std::max(max_z, std::abs(mc.mean_s[i] - mc.s0) / mc.se[i]);
            return max_z;
        };
        out.gauss_z = score(out.gauss.recs, out.gauss_pass);
        out.quartic_z = score(out.quartic.recs, out.quartic_pass);
        return out;
    }();
    return me;
}

// 3. Set-mass martingale: ensemble means stay inside the three-standard-error
// band around s_0 at every grid time, on a Gaussian and on a quartic law.
Criterion martingale_band() {
    const auto& me = martingale_ensembles();
    Criterion c;
    c.pass = me.gauss_pass && me.quartic_pass && me.gauss.censored <= 10 &&
             me.quartic.censored <= 10;
    c.detail = "max |mean s_t - s_0| / SE = " + fmt(me.gauss_z) + " (gaussian), " +
               fmt(me.quartic_z) + " (quartic) over 500 paths each (tol 3, censored " +
               std::to_string(me.gauss.censored) + " + " +
               std::to_string(me.quartic.censored) + ")";
    return c;
}

// 4. Quadratic variation: empirical squared set-mass increments stay below the
// running operator-norm integral that is supposed to dominate them.
Criterion qv_domination() {
    const auto& me = martingale_ensembles();
    double emp = 0.0, bound = 0.0;
    for (const auto& rec : me.gauss.recs) {
        emp += set_mass_martingale(rec, 0, false).qv.back();
        bound += rec.qv_bound.back();
    }
    const double ratio = emp / bound;
    Criterion c;
    c.pass = ratio <= 1.25;
    c.detail = "sum (ds)^2 / mean qv bound = " + fmt(ratio) + " on [0, 1] (tol 1.25)";
    return c;
}

// 5. Curvature floor: the smallest tilted-Hessian eigenvalue observed at
// sampled path points never drops below min(eta, t).
Criterion curvature_floor() {
    const auto& me = martingale_ensembles();
    double margin = std::numeric_limits<double>::infinity();
    long points = 0;
    for (const auto& rec : me.gauss.recs) {
        margin = std::min(margin, rec.hessian_margin_min);
        points += static_cast<long>(rec.times.size()) - 1;
    }
    for (const auto& rec : me.quartic.recs) {
        margin = std::min(margin, rec.hessian_margin_min);
        points += static_cast<long>(rec.times.size()) - 1;
    }
    Criterion c;
    c.pass = points >= 1000 && margin >= -1e-6;
    c.detail = "min eig margin = " + fmt(margin) + " over " + std::to_string(points) +
               " sampled points (tol -1e-06)";
    return c;
}

// 6. Brownian tail: the terminal deviation event stays under exp(-a^2/2b) and
// the exponential supermartingale means stay below 1 within noise.
Criterion brownian_tail() {
    const auto paths = brownian_paths(10000, 1.0, 0.01, 606);
    const auto tc = empirical_tail(paths, 2.0, 1.0, 1.0);
    const auto checks = exponential_supermartingale_check(paths, {0.5, 1.0, 2.0});
    bool super = true;
    double worst_mean = 0.0;
    for (const auto& chk : checks) {
        super = super && chk.pass;
        for (const double m : chk.mean) worst_mean = std::max(worst_mean, m);
    }
    Criterion c;
    c.pass = std::abs(tc.fraction - 0.0228) <= 0.005 && tc.fraction <= 0.1353 && super;
    c.detail = "tail fraction = " + fmt(tc.fraction) + " (expect 0.0228 +- 0.005, bound 0.1353)" +
               ", max supermartingale mean = " + fmt(worst_mean);
    return c;
}

// 7. Spectral decay: on isotropic Gaussian laws the derivative of tr(Q_t^p)
// matches the closed form -p k / (1+t)^{p+1}.
Criterion spectral_decay() {
    double max_rel = 0.0;
    for (const int k : {2, 4, 8}) {
        const int n = k + 2;
        const auto split = SubspaceSplit::axis(n, k);
        const auto pot = make_gaussian(MatrixXd::Identity(n, n), split);
        const double p = default_p(k);
        const auto gamma_at = [&](double t) {
            const auto conj = gaussian_conjugacy(*pot.gaussian, split.P, t, VectorXd::Zero(n));
            return snapshot(split.restrict_perp(conj.K)).gamma;
        };
        const double h = 1e-4;
        for (const double t : {0.5, 1.0, 2.0}) {
            const double fd = (gamma_at(t + h) - gamma_at(t - h)) / (2.0 * h);
            const double closed = -p * k / std::pow(1.0 + t, p + 1.0);
            max_rel = std::max(max_rel, std::abs(fd - closed) / std::abs(closed));
        }
    }
    Criterion c;
    c.pass = max_rel <= 1e-4;
    c.detail = "max relative error = " + fmt(max_rel) + " for k in {2, 4, 8} (tol 1e-04)";
    return c;
}

// 8. Drift envelopes: the drift norm and the second-order correction obey
// their spectral-potential envelopes on whitened ensembles.
Criterion drift_envelopes() {
    const auto run_checks = [](const std::vector<SpectralRow>& rows, double& c_hat,
                               double& ratio) {
        std::vector<std::pair<double, double>> series;
        std::vector<DeltaPoint> dpts;
        for (const auto& row : rows) {
            series.emplace_back(row.v_norm, row.gamma_root);
            dpts.push_back({row.delta_upper, row.gamma, row.p});
        }
        const auto vb = check_vt_bound(series, 20.0);
        const auto db = check_delta_bound(dpts, 1.0, 0.1);
        c_hat = vb.fitted;
        ratio = db.fitted;
        return vb.pass && db.pass;
    };

    VectorXd diag(6);
    diag << 4.0, 2.25, 1.0, 0.25, 1.0, 1.0;
    const auto split = SubspaceSplit::axis(6, 4);
    const auto base = make_gaussian(MatrixXd(diag.asDiagonal()), split);
    const auto wg = whiten(base, base.gaussian->sigma);
    RunConfig grc;
    grc.T = 0.5;
    grc.dt = 0.0125;
    grc.mode = MomentMode::exact_sample;
    grc.count = 2000;
    const auto gens = run_ensemble(wg.potential, grc, 40, 808);
    double c_g = 0.0, r_g = 0.0;
    const bool ok_g = run_checks(gens.rows, c_g, r_g);

    const auto qbase = make_flat_strong(1.0, FlatStrongW::quartic(1.0, 0.0), split);
    MalaConfig pm;
    pm.thinning = 2;
    pm.stream_index = replica_stream(0xfffe, 2);
    const auto qpilot = mala_sample(qbase, 8000, pm, 809);
    const auto wq = whiten(qbase, estimate_moments(qpilot).cov);
    RunConfig qrc;
    qrc.T = 0.3;
    qrc.dt = 0.015;
    qrc.mode = MomentMode::mala;
    qrc.count = 1200;
    qrc.mala.thinning = 2;
    qrc.mala.warmup = 150;
    const auto qens = run_ensemble(wq.potential, qrc, 30, 809);
    double c_q = 0.0, r_q = 0.0;
    const bool ok_q = run_checks(qens.rows, c_q, r_q);

    Criterion c;
    c.pass = ok_g && ok_q && gens.censored == 0 && qens.censored == 0;
    c.detail = "fitted drift constant = " + fmt(std::max(c_g, c_q)) +
               " (tol 20), correction ratio = " + fmt(std::max(r_g, r_q)) + " (tol 1.1)";
    return c;
}

// 9. Covariance control: over a short horizon no whitened path lets the
// projected covariance blow up by an order of magnitude.
Criterion covariance_exit() {
    VectorXd diag(6);
    diag << 4.0, 2.25, 1.0, 0.25, 1.0, 1.0;
    const auto split = SubspaceSplit::axis(6, 4);
    const auto base = make_gaussian(MatrixXd(diag.asDiagonal()), split);
    const auto wg = whiten(base, base.gaussian->sigma);
    RunConfig rc;
    rc.T = 0.05;
    rc.dt = 0.005;
    rc.mode = MomentMode::exact_sample;
    rc.count = 500;
    const auto ens = run_ensemble(wg.potential, rc, 1000, 909);
    const auto stats = exit_time_stats(ens.recs, 10.0, 0.1);
    Criterion c;
    c.pass = ens.censored == 0 && stats.paths == 1000 && stats.exceed_prob.back() == 0.0;
    c.detail = "exceedance fraction = " + fmt(stats.exceed_prob.back()) +
               " of 1000 paths (95% upper bound " + fmt(stats.upper95.back()) + ")";
    return c;
}

// 10. Concentration shape: the worst half-space tail hits the quartile radius
// of the standard normal, and -log alpha dominates a fitted min(r, r^2) shape.
Criterion concentration_shape() {
    const auto gbatch = sample_exact_gaussian(MatrixXd::Identity(4, 4), VectorXd::Zero(4),
                                              60000, 1010, replica_stream(0xfffe, 3));
    const auto gcurve = alpha_curve(
        gbatch, direction_family(MatrixXd::Identity(4, 4), 32, 1010), {0.6745});
    const double alpha_q = gcurve.alpha[0];

    const auto fsplit = SubspaceSplit::axis(3, 1);
    const auto fpot = make_flat_strong(1.0, FlatStrongW::quartic(1.0, 0.0), fsplit);
    MalaConfig pm;
    pm.thinning = 2;
    pm.stream_index = replica_stream(0xfffe, 4);
    const auto fbatch = mala_sample(fpot, 50000, pm, 1011);
    const auto fcov = estimate_moments(fbatch).cov;
    const auto fcurve =
        alpha_curve(fbatch, direction_family(fcov, 32, 1011), linspace(0.0, 4.0, 17));
    const double q_norm = sym_opnorm(fsplit.restrict_perp(fcov));
    const auto mt = check_main_theorem(fcurve, fpot.eta, 1, q_norm, 1.0);

    Criterion c;
    c.pass = std::abs(alpha_q - 0.25) <= 0.02 && mt.monotone && mt.fitted_prefactor > 0.0;
    c.detail = "alpha(0.6745) = " + fmt(alpha_q) + " (expect 0.25 +- 0.02), fitted prefactor = " +
               fmt(mt.fitted_prefactor) + " (reported, must be > 0)";
    return c;
}

// 11. Whitening transfer: concentration of the anisotropic law is controlled
// by the whitened law at radii shrunk by the largest map eigenvalue.
Criterion whitening_transfer() {
    VectorXd diag(4);
    diag << 4.0, 1.0, 0.25, 1.0;
    const MatrixXd sigma = diag.asDiagonal();
    const auto split = SubspaceSplit::axis(4, 2);
    const auto mu = make_gaussian(sigma, split);
    const auto wr = whiten(mu, sigma);
    const auto batch_mu = sample_exact_gaussian(sigma, VectorXd::Zero(4), 50000, 1111,
                                                replica_stream(0xfffe, 5));
    const auto batch_w =
        sample_exact_gaussian(wr.potential.gaussian->sigma, VectorXd::Zero(4), 50000, 1111,
                              replica_stream(0xfffe, 6));
    const auto radii = linspace(0.0, 3.0, 13);
    std::vector<double> scaled;
    for (const double r : radii) scaled.push_back(r / wr.lambda_max_S);
    const auto cm = alpha_curve(batch_mu, direction_family(sigma, 48, 1111), radii);
    const auto cw = alpha_curve(
        batch_w, direction_family(wr.potential.gaussian->sigma, 48, 1111), scaled);
    double max_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < radii.size(); ++i)
        max_excess = std::max(max_excess,
                              cm.alpha[i] - cw.alpha[i] - 3.0 * (cm.se[i] + cw.se[i]));
    Criterion c;
    c.pass = max_excess <= 0.0;
    c.detail = "max excess over the scaled curve = " + fmt(max_excess) +
               " across 13 radii (tol 0)";
    return c;
}

// 12. Determinism: identical config and seed reproduce every CSV byte for byte.
Criterion determinism() {
    ExperimentConfig ec;
    ec.n = 2;
    ec.k = 1;
    ec.T = 0.2;
    ec.dt = 0.02;
    ec.replicas = 6;
    ec.seed = 3;
    ec.mode = "exact";
    ec.count = 600;
    ec.conc_samples = 6000;
    ec.conc_directions = 8;
    ec.freedman_paths = 200;
    ec.freedman_T = 0.5;
    const fs::path root = fs::temp_directory_path() / "subloc_acceptance";
    fs::remove_all(root);
    const fs::path a = root / "a", b = root / "b";
    run_experiment(ec, a.string(), StageSet::all(), true);
    run_experiment(ec, b.string(), StageSet::all(), true);
    bool same = true;
    for (const std::string name : {"paths.csv", "spectra.csv", "curves.csv"})
        same = same && read_bytes(a / name) == read_bytes(b / name);
    fs::remove_all(root);
    Criterion c;
    c.pass = same;
    c.detail = same ? "paths.csv, spectra.csv, curves.csv identical across reruns"
                    : "csv outputs differ between identical runs";
    return c;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Criterion()>>> criteria = {
        {"covariance replay against the closed-form flow", covariance_replay},
        {"tilted density mass by quadrature", tilted_mass},
        {"set-mass martingale band", martingale_band},
        {"quadratic variation domination", qv_domination},
        {"tilted curvature floor", curvature_floor},
        {"Brownian tail bound and supermartingale", brownian_tail},
        {"spectral potential decay identity", spectral_decay},
        {"drift and correction envelopes", drift_envelopes},
        {"covariance exit probability", covariance_exit},
        {"concentration curve shape", concentration_shape},
        {"whitening transfer of concentration", whitening_transfer},
        {"bytewise determinism", determinism},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Criterion c;
        try {
            c = criteria[i].second();
        } catch (const std::exception& e) {
            c.pass = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%2zu/12] %s  %s: %s\n", i + 1, c.pass ? "PASS" : "FAIL",
                    criteria[i].first.c_str(), c.detail.c_str());
        std::fflush(stdout);
        all = all && c.pass;
    }
    std::printf("acceptance: %s\n", all ? "12/12 pass" : "failing criteria above");
    return all ? 0 : 1;
}
