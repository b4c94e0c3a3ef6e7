#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "subloc/spectra.hpp"

using namespace subloc;

namespace {

// closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric method)
Eigen::Vector3d sym3_eigs(const MatrixXd& a) {
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    Eigen::Vector3d out;
    if (p1 == 0.0) {
        out << a(0, 0), a(1, 1), a(2, 2);
        std::sort(out.data(), out.data() + 3, std::greater<double>());
        return out;
    }
    const double q = a.trace() / 3.0;
    const double p2 = std::pow(a(0, 0) - q, 2) + std::pow(a(1, 1) - q, 2) +
                      std::pow(a(2, 2) - q, 2) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const MatrixXd b = (a - q * MatrixXd::Identity(3, 3)) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    out << e1, 3.0 * q - e1 - e3, e3;
    return out;
}

}  // namespace

TEST_CASE("snapshot evaluates the spectral potential") {
    const auto s = snapshot(MatrixXd::Identity(3, 3));
    CHECK(s.p == Catch::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(s.gamma == Catch::Approx(3.0).epsilon(1e-12));
    CHECK(s.gamma_root == Catch::Approx(std::pow(3.0, 1.0 / std::log(3.0))).epsilon(1e-12));

    MatrixXd q2 = MatrixXd::Zero(2, 2);
    q2.diagonal() << 2.0, 1.0;
    const auto s2 = snapshot(q2, 2.0);
    CHECK(s2.gamma == Catch::Approx(5.0).epsilon(1e-12));
    CHECK(s2.lambdas(0) == Catch::Approx(2.0).epsilon(1e-14));
    CHECK(s2.lambdas(1) == Catch::Approx(1.0).epsilon(1e-14));

    // projected covariance of the identity-gaussian at t=1, trace exponent 1
    const auto s3 = snapshot(MatrixXd::Identity(2, 2) * 0.5, 1.0);
    CHECK(s3.gamma == Catch::Approx(1.0).epsilon(1e-12));

    CHECK(default_p(2) == 1.0);  // log 2 < 1
    CHECK(default_p(8) == Catch::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("snapshot clamps tiny negatives and rejects asymmetry") {
    MatrixXd q = MatrixXd::Zero(2, 2);
    q.diagonal() << 1.0, -1e-10;
    const auto s = snapshot(q);
    CHECK(s.lambdas(1) == 0.0);
    CHECK(s.min_eig_raw == Catch::Approx(-1e-10).margin(1e-14));
    CHECK(!s.clamp_warning);

    q(1, 1) = -1e-6;
    CHECK(snapshot(q).clamp_warning);

    MatrixXd bad(2, 2);
    bad << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS(snapshot(bad));
}

TEST_CASE("snapshot eigenvalues match the characteristic polynomial for k <= 3") {
    Philox rng(15, stream_id(streams::kScratch, 7));
    for (int trial = 0; trial < 30; ++trial) {
        MatrixXd g(3, 3);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) g(i, j) = rng.normal();
        const MatrixXd q = symmetrize(g * g.transpose());
        const auto s = snapshot(q);
        const auto ref = sym3_eigs(q);
        for (int i = 0; i < 3; ++i) CHECK(s.lambdas(i) == Catch::Approx(ref(i)).margin(1e-8));
    }
    // 2x2 closed form
    MatrixXd q(2, 2);
    q << 3.0, 1.0, 1.0, 2.0;
    const double mid = 2.5, disc = std::sqrt(0.25 + 1.0);
    const auto s = snapshot(q);
    CHECK(s.lambdas(0) == Catch::Approx(mid + disc).epsilon(1e-12));
    CHECK(s.lambdas(1) == Catch::Approx(mid - disc).epsilon(1e-12));
}

TEST_CASE("third moments vanish exactly on centrally symmetric batches") {
    SampleBatch b;
    b.points.resize(2, 6);
    b.points << 0.3, -0.3, 1.1, -1.1, 0.4, -0.4,
                0.9, -0.9, -0.2, 0.2, 0.0, 0.0;
    const auto tm = third_moments(b, VectorXd::Zero(2), MatrixXd::Identity(2, 2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(tm.at(i, j).norm() < 1e-15);
}

TEST_CASE("third moments of gaussian samples are noise") {
    MatrixXd sig = MatrixXd::Zero(2, 2);
    sig.diagonal() << 2.0, 1.0;
    const auto b = sample_exact_gaussian(sig, VectorXd::Zero(2), 50000, 5);
    const auto est = estimate_moments(b);
    const auto tm = third_moments(b, est.mean, MatrixXd::Identity(2, 2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            CHECK(tm.at(i, j).cwiseAbs().maxCoeff() <= 5.0 * tm.se);
            CHECK((tm.at(i, j) - tm.at(j, i)).norm() == 0.0);
        }
}

TEST_CASE("third moment of the exponential law is recovered") {
    Philox rng(9, stream_id(streams::kScratch, 8));
    const int m = 200000;
    SampleBatch b;
    b.points.resize(1, m);
    for (int j = 0; j < m; ++j) b.points(0, j) = -std::log(rng.uniform());
    const auto est = estimate_moments(b);
    const auto tm = third_moments(b, est.mean, MatrixXd::Identity(1, 1));
    CHECK(std::abs(tm.at(0, 0)(0) - 2.0) <= 5.0 * tm.se);
}

TEST_CASE("marginal batch extracts perp coordinates") {
    const auto split = SubspaceSplit::rotated(4, 2, 61);
    const auto b = sample_exact_gaussian(MatrixXd::Identity(4, 4), VectorXd::Zero(4), 20, 2);
    const auto mb = marginal_batch(b, split);
    CHECK(mb.dim() == 2);
    for (int j = 0; j < 20; ++j)
        CHECK((mb.points.col(j) - split.to_perp(b.points.col(j))).norm() < 1e-14);
}

TEST_CASE("drift terms evaluate the closed formulas") {
    // zero third moments
    SpectralSnapshot s = snapshot(MatrixXd::Identity(2, 2), 2.0);
    ThirdMoments u0;
    u0.u.assign(2, std::vector<VectorXd>(2, VectorXd::Zero(2)));
    auto d0 = drift_terms(s, u0);
    CHECK(d0.v.norm() == 0.0);
    CHECK(d0.delta_upper == 0.0);

    // k=1, lambda=1, p=1: v passes through, the (p-1) factor kills delta
    SpectralSnapshot s1 = snapshot(MatrixXd::Identity(1, 1), 1.0);
    ThirdMoments u1;
    u1.u.assign(1, std::vector<VectorXd>(1, VectorXd::Constant(1, 0.37)));
    auto d1 = drift_terms(s1, u1);
    CHECK(d1.v(0) == Catch::Approx(0.37).epsilon(1e-14));
    CHECK(d1.delta_upper == 0.0);

    // k=2, lambda=(1,1), p=2, u_ii = e_i, u_12 = 0
    ThirdMoments u2;
    u2.u.assign(2, std::vector<VectorXd>(2, VectorXd::Zero(2)));
    u2.u[0][0] = VectorXd::Unit(2, 0);
    u2.u[1][1] = VectorXd::Unit(2, 1);
    auto d2 = drift_terms(s, u2);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(d2.v(0) == Catch::Approx(inv_sqrt2).epsilon(1e-14));
    CHECK(d2.v(1) == Catch::Approx(inv_sqrt2).epsilon(1e-14));
    CHECK(d2.delta_upper == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));

    CHECK_THROWS(drift_terms(snapshot(MatrixXd::Zero(2, 2)), u2));
}

TEST_CASE("drift terms agree with a brute-force evaluation") {
    Philox rng(21, stream_id(streams::kScratch, 9));
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + trial % 3;
        MatrixXd g(k, k);
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < k; ++i) g(i, j) = rng.normal();
        const auto s = snapshot(symmetrize(g * g.transpose()) + 0.2 * MatrixXd::Identity(k, k));
        ThirdMoments u;
        u.u.assign(k, std::vector<VectorXd>(k, VectorXd::Zero(k)));
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) {
                VectorXd r(k);
                for (int l = 0; l < k; ++l) r(l) = rng.normal();
                u.u[i][j] = r;
                u.u[j][i] = r;
            }
        const auto d = drift_terms(s, u);

        const double front = std::exp((1.0 / s.p - 1.0) * std::log(s.gamma));
        VectorXd v_ref = VectorXd::Zero(k);
        double quad_ref = 0.0;
        for (int i = 0; i < k; ++i) {
            v_ref += std::exp((s.p - 1.0) * std::log(s.lambdas(i))) * u.u[i][i];
            for (int j = 0; j < k; ++j)
                quad_ref +=
                    std::exp((s.p - 2.0) * std::log(s.lambdas(i))) * u.u[i][j].squaredNorm();
        }
        v_ref *= front;
        const double delta_ref = (s.p - 1.0) * front * quad_ref;
        CHECK((d.v - v_ref).norm() < 1e-12 * (1.0 + v_ref.norm()));
        CHECK(d.delta_upper == Catch::Approx(delta_ref).epsilon(1e-12));
    }
}

TEST_CASE("drift terms carry the scaling degrees of covariance and skew") {
    Philox rng(22, stream_id(streams::kScratch, 10));
    const int k = 3;
    MatrixXd g(k, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) g(i, j) = rng.normal();
    const MatrixXd q = symmetrize(g * g.transpose()) + 0.2 * MatrixXd::Identity(k, k);
    ThirdMoments u;
    u.u.assign(k, std::vector<VectorXd>(k, VectorXd::Zero(k)));
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) {
            VectorXd r(k);
            for (int l = 0; l < k; ++l) r(l) = rng.normal();
            u.u[i][j] = r;
            u.u[j][i] = r;
        }
    const double scale = 2.7;
    ThirdMoments u_scaled = u;
    for (auto& row : u_scaled.u)
        for (auto& vec : row) vec *= std::pow(scale, 1.5);
    // eigenvectors of sQ equal those of Q, so the scaled snapshot pairs with u_scaled
    const auto d = drift_terms(snapshot(q), u);
    const auto ds = drift_terms(snapshot(scale * q), u_scaled);
    CHECK(ds.v.norm() == Catch::Approx(std::pow(scale, 1.5) * d.v.norm()).epsilon(1e-10));
    CHECK(ds.delta_upper ==
          Catch::Approx(scale * scale * d.delta_upper).epsilon(1e-10));
}

TEST_CASE("bound checkers reduce the series to a worst ratio") {
    const auto vt = check_vt_bound({{0.0, 1.0}, {0.0, 0.5}});
    CHECK(vt.fitted == 0.0);
    CHECK(vt.pass);
    const auto vt2 = check_vt_bound({{2.0, 1.0}, {1.0, 4.0}});
    CHECK(vt2.fitted == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(vt2.pass);
    const auto vt3 = check_vt_bound({{30.0, 1.0}});
    CHECK(!vt3.pass);

    const auto db = check_delta_bound({{0.0, 3.0, 2.0}}, 1.0);
    CHECK(db.fitted == 0.0);
    CHECK(db.pass);
    // delta equal to its cap: ratio 1
    const double gamma = 2.0, p = 2.0;
    const auto db2 = check_delta_bound({{4.0 * p * gamma, gamma, p}}, 1.0, 0.05);
    CHECK(db2.fitted == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(db2.pass);
    CHECK_THROWS(check_delta_bound({}, 0.0));
}

TEST_CASE("gaussian spectral decay matches the closed-form time derivative") {
    for (int k : {2, 4, 8}) {
        const double p = default_p(k);
        const double t = 1.0, h = 1e-4;
        const auto gamma_at = [&](double tt) {
            return snapshot(MatrixXd::Identity(k, k) / (1.0 + tt)).gamma;
        };
        const double fd = (gamma_at(t + h) - gamma_at(t - h)) / (2.0 * h);
        const double expect = -p * k / std::pow(1.0 + t, p + 1.0);
        CHECK(fd == Catch::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("exit statistics on oracle paths never exceed the threshold") {
    const auto split = SubspaceSplit::axis(3, 2);
    MatrixXd none = MatrixXd::Zero(3, 50);
    std::vector<PathRecord> ens;
    for (int i = 0; i < 10; ++i)
        ens.push_back(gaussian_oracle_path(MatrixXd::Identity(3, 3), split, none, 0.01));
    const auto stats = exit_time_stats(ens, 10.0, 0.1);
    CHECK(stats.paths == 10);
    for (double pr : stats.exceed_prob) CHECK(pr == 0.0);
    CHECK(stats.upper95.back() == Catch::Approx(0.3).epsilon(1e-12));
    CHECK(stats.reference.back() == Catch::Approx(std::exp(-0.1 / 0.5)).epsilon(1e-10));

    const auto vacuous = exit_time_stats(ens, 0.0, 0.1);
    for (std::size_t i = 1; i < vacuous.times.size(); ++i) CHECK(vacuous.exceed_prob[i] == 1.0);
}

TEST_CASE("gamma quadratic variation checker validates on synthetic dynamics") {
    Philox rng(31, stream_id(streams::kScratch, 11));
    const int paths = 300, steps = 100;
    const double dt = 0.01;
    std::vector<std::vector<double>> g(paths), v(paths);
    for (int pi = 0; pi < paths; ++pi) {
        double x = 1.0;
        for (int i = 0; i <= steps; ++i) {
            const double vi = 0.3 + 0.2 * std::sin(0.05 * i);
            g[pi].push_back(x);
            v[pi].push_back(vi);
            x += vi * std::sqrt(dt) * rng.normal();
        }
    }
    const auto qc = gamma_qv_check(g, v, dt);
    CHECK(qc.pass);
    CHECK(qc.empirical_qv == Catch::Approx(qc.integrated_v2).epsilon(0.1));

    // inflate the motion: the identity must fail
    auto g_bad = g;
    for (auto& path : g_bad)
        for (auto& x : path) x *= 1.4;
    CHECK(!gamma_qv_check(g_bad, v, dt).pass);
}
