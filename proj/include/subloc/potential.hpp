// Log-concave potentials with directional curvature: built-in families,
// hypothesis verification, tilting, and the whitening reduction that makes the
// projected covariance the identity.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>

#include "subloc/linalg.hpp"
#include "subloc/philox.hpp"
#include "subloc/stats.hpp"
#include "subloc/subspace.hpp"

namespace subloc {

enum class PotentialKind { gaussian, flat_strong, truncated, custom };

// Present when the overall law is a centered Gaussian; unlocks closed forms.
struct GaussianSpec {
    MatrixXd sigma;
    MatrixXd precision;
};

struct Potential {
    SubspaceSplit split;
    double eta = 0.0;  // curvature lower bound on E, +inf when E = {0}
    std::function<double(const VectorXd&)> value;
    std::function<VectorXd(const VectorXd&)> gradient;
    std::function<MatrixXd(const VectorXd&)> hessian;  // empty -> finite differences
    double support_radius = std::numeric_limits<double>::infinity();
    PotentialKind kind = PotentialKind::custom;
    std::optional<GaussianSpec> gaussian;

    static double fd_step(const VectorXd& x) { return 1e-5 * (1.0 + x.norm()); }

    VectorXd fd_gradient(const VectorXd& x) const {
        const double h = fd_step(x);
        VectorXd g(x.size());
        VectorXd xp = x, xm = x;
        for (int i = 0; i < x.size(); ++i) {
            xp(i) = x(i) + h;
            xm(i) = x(i) - h;
            g(i) = (value(xp) - value(xm)) / (2.0 * h);
            xp(i) = x(i);
            xm(i) = x(i);
        }
        return g;
    }

    MatrixXd hessian_at(const VectorXd& x) const {
        if (hessian) return hessian(x);
        const double h = fd_step(x);
        MatrixXd H(x.size(), x.size());
        VectorXd xp = x, xm = x;
        for (int j = 0; j < x.size(); ++j) {
            xp(j) = x(j) + h;
            xm(j) = x(j) - h;
            H.col(j) = (gradient(xp) - gradient(xm)) / (2.0 * h);
            xp(j) = x(j);
            xm(j) = x(j);
        }
        return symmetrize(H);
    }

    bool in_support(const VectorXd& x) const { return x.norm() <= support_radius; }
};

// Largest eta with precision >= eta * P_E, from the Schur complement of the
// E_perp block in split coordinates. Infinite when E is trivial.
inline double max_eta_for_precision(const MatrixXd& precision, const SubspaceSplit& split) {
    if (split.k == split.n) return std::numeric_limits<double>::infinity();
    const MatrixXd Bp = split.basis_perp();
    const MatrixXd Be = split.basis_E();
    const MatrixXd app = Bp.transpose() * precision * Bp;
    const MatrixXd ape = Bp.transpose() * precision * Be;
    const MatrixXd aee = Be.transpose() * precision * Be;
    const MatrixXd schur = aee - ape.transpose() * app.ldlt().solve(ape);
    return sym_min_eig(schur);
}

inline Potential make_gaussian(const MatrixXd& sigma, const SubspaceSplit& split) {
    const int n = split.n;
    if (sigma.rows() != n || sigma.cols() != n)
        throw std::invalid_argument("make_gaussian: sigma dimension mismatch");
    Eigen::LLT<MatrixXd> llt(symmetrize(sigma));
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("make_gaussian: sigma not positive definite");
    const MatrixXd prec = llt.solve(MatrixXd::Identity(n, n));
    // value carries the normalizing constant so e^{-V} is a density
    const double log_norm = 0.5 * (n * std::log(2.0 * M_PI) + logdet_spd(sigma));
    Potential p;
    p.split = split;
    p.eta = max_eta_for_precision(prec, split);
    p.kind = PotentialKind::gaussian;
    p.gaussian = GaussianSpec{symmetrize(sigma), symmetrize(prec)};
    p.value = [prec, log_norm](const VectorXd& x) { return 0.5 * x.dot(prec * x) + log_norm; };
    p.gradient = [prec](const VectorXd& x) -> VectorXd { return prec * x; };
    p.hessian = [prec](const VectorXd&) { return prec; };
    return p;
}

// Convex part acting on the E_perp coordinates of flat_strong potentials:
// either a quadratic (1/2) y'Ay, or a separable quartic sum a4 y^4/4 + a2 y^2/2.
struct FlatStrongW {
    enum class Kind { quadratic, quartic } kind;
    MatrixXd A;           // quadratic
    double a4 = 0.0, a2 = 0.0;  // quartic

    static FlatStrongW quadratic(const MatrixXd& a) { return {Kind::quadratic, a, 0.0, 0.0}; }
    static FlatStrongW quartic(double a4, double a2) {
        return {Kind::quartic, MatrixXd(), a4, a2};
    }
};

// V(x) = eta |P_E x|^2 / 2 + W(perp coords of x); satisfies the curvature
// hypothesis with equality on E.
inline Potential make_flat_strong(double eta, const FlatStrongW& w, const SubspaceSplit& split) {
    if (eta < 0.0) throw std::invalid_argument("make_flat_strong: eta must be nonnegative");
    const int n = split.n, k = split.k;
    Potential p;
    p.split = split;
    p.eta = (k == n) ? std::numeric_limits<double>::infinity() : eta;
    p.kind = PotentialKind::flat_strong;
    const MatrixXd Bp = split.basis_perp();
    const MatrixXd PE = split.P_E;
    if (w.kind == FlatStrongW::Kind::quadratic) {
        if (w.A.rows() != k || w.A.cols() != k)
            throw std::invalid_argument("make_flat_strong: quadratic block must be k x k");
        Eigen::LLT<MatrixXd> block_llt(symmetrize(w.A));
        if (block_llt.info() != Eigen::Success)
            throw std::invalid_argument("make_flat_strong: quadratic block not positive definite");
        MatrixXd prec = Bp * symmetrize(w.A) * Bp.transpose();
        if (k < n) prec += eta * PE;
        prec = symmetrize(prec);
        Eigen::LLT<MatrixXd> full_llt(prec);
        if (full_llt.info() == Eigen::Success) {
            // overall law is Gaussian with precision Bp A Bp' + eta P_E
            Potential g = make_gaussian(full_llt.solve(MatrixXd::Identity(n, n)), split);
            g.kind = PotentialKind::flat_strong;
            g.eta = p.eta;
            return g;
        }
        // eta = 0 leaves E flat; only meaningful once truncated, no closed forms
        p.value = [prec](const VectorXd& x) { return 0.5 * x.dot(prec * x); };
        p.gradient = [prec](const VectorXd& x) -> VectorXd { return prec * x; };
        p.hessian = [prec](const VectorXd&) { return prec; };
        return p;
    }
    if (w.a4 < 0.0 || w.a2 < 0.0)
        throw std::invalid_argument("make_flat_strong: quartic coefficients must be nonnegative");
    const double a4 = w.a4, a2 = w.a2;
    p.value = [Bp, PE, eta, a4, a2](const VectorXd& x) {
        const VectorXd y = Bp.transpose() * x;
        const double wv = (a4 / 4.0) * y.array().pow(4).sum() + (a2 / 2.0) * y.squaredNorm();
        return 0.5 * eta * (PE * x).squaredNorm() + wv;
    };
    p.gradient = [Bp, PE, eta, a4, a2](const VectorXd& x) -> VectorXd {
        const VectorXd y = Bp.transpose() * x;
        const VectorXd wy = a4 * y.array().cube().matrix() + a2 * y;
        return eta * (PE * x) + Bp * wy;
    };
    p.hessian = [Bp, PE, eta, a4, a2](const VectorXd& x) -> MatrixXd {
        const VectorXd y = Bp.transpose() * x;
        const VectorXd d = 3.0 * a4 * y.array().square().matrix() + VectorXd::Constant(y.size(), a2);
        return Bp * d.asDiagonal() * Bp.transpose() + eta * PE;
    };
    return p;
}

// Hard truncation to the centered ball of radius R. The law stops being
// Gaussian, so closed-form metadata is dropped; derivatives are only ever
// taken strictly inside.
inline Potential make_truncated(Potential base, double R) {
    if (!(R > 0.0)) throw std::invalid_argument("make_truncated: R must be positive");
    Potential p = base;
    p.kind = PotentialKind::truncated;
    p.gaussian.reset();
    p.support_radius = std::min(R, base.support_radius);
    auto base_value = base.value;
    const double radius = p.support_radius;
    p.value = [base_value, radius](const VectorXd& x) {
        if (x.norm() > radius) return std::numeric_limits<double>::infinity();
        return base_value(x);
    };
    return p;
}

// Radius making the untruncated mass outside the ball < mass_tol, sized from
// the Gaussian curvature of the potential.
inline double default_truncation_radius(const Potential& p, double mass_tol = 1e-7) {
    const int n = p.split.n;
    if (p.gaussian) {
        const double lam_max = sym_opnorm(p.gaussian->sigma);
        return std::sqrt(lam_max * chi_square_isf(mass_tol, n));
    }
    const MatrixXd H0 = p.hessian_at(VectorXd::Zero(n));
    const double theta = std::min(p.eta, sym_min_eig(H0));
    if (!(theta > 0.0))
        throw std::domain_error("default_truncation_radius: no curvature to size the tail");
    return std::sqrt(chi_square_isf(mass_tol, n) / theta);
}

struct HypothesisReport {
    double min_restricted_eig = std::numeric_limits<double>::infinity();
    double min_full_eig = std::numeric_limits<double>::infinity();
    double max_gradient_rel_err = 0.0;
    bool pass = false;
};

// Checks nabla^2 V >= eta on E at sampled points (the restricted block in the
// E basis) plus convexity and gradient/value consistency.
inline HypothesisReport verify_hypothesis(const Potential& p, int n_points, std::uint64_t seed) {
    Philox rng(seed, stream_id(streams::kScratch, 2));
    const int n = p.split.n;
    const double tol = std::isinf(p.eta) ? 0.0 : 1e-8 * (1.0 + p.eta);
    HypothesisReport rep;
    const bool bounded = std::isfinite(p.support_radius);
    MatrixXd scale;
    if (!bounded)
        scale = p.gaussian ? MatrixXd(2.0 * sqrt_psd(p.gaussian->sigma))
                           : MatrixXd(3.0 * MatrixXd::Identity(n, n));
    for (int i = 0; i < n_points; ++i) {
        VectorXd x(n);
        if (bounded) {
            const VectorXd u = random_unit_vector(n, rng);
            const double r = p.support_radius * 0.98 * std::pow(rng.uniform(), 1.0 / n);
            x = r * u;
        } else {
            for (int j = 0; j < n; ++j) x(j) = rng.normal();
            x = scale * x;
        }
        const MatrixXd H = p.hessian_at(x);
        if (!H.allFinite()) throw std::runtime_error("verify_hypothesis: non-finite Hessian");
        rep.min_full_eig = std::min(rep.min_full_eig, sym_min_eig(H));
        if (p.split.k < n) {
            const MatrixXd Be = p.split.basis_E();
            rep.min_restricted_eig =
                std::min(rep.min_restricted_eig, sym_min_eig(Be.transpose() * H * Be));
        }
        const VectorXd g = p.gradient(x);
        const double err = (g - p.fd_gradient(x)).norm() / (1.0 + g.norm());
        rep.max_gradient_rel_err = std::max(rep.max_gradient_rel_err, err);
    }
    rep.pass = std::isinf(p.eta) || rep.min_restricted_eig >= p.eta - tol;
    return rep;
}

// Gaussian closed forms for the tilted measure: completing the square gives
// covariance (Sigma^{-1} + tP)^{-1} and mean K_t c.
struct GaussianConjugacy {
    MatrixXd K;
    VectorXd mean;
    double log_partition = 0.0;
};

inline GaussianConjugacy gaussian_conjugacy(const GaussianSpec& g, const MatrixXd& P, double t,
                                            const VectorXd& c) {
    const MatrixXd prec_t = g.precision + t * P;
    GaussianConjugacy out;
    out.K = symmetrize(prec_t.llt().solve(MatrixXd::Identity(P.rows(), P.cols())));
    out.mean = out.K * c;
    out.log_partition = -0.5 * (logdet_spd(prec_t) - logdet_spd(g.precision)) + 0.5 * c.dot(out.mean);
    return out;
}

// V_t(x) = V(x) + (t/2) x'Px - c.x + log Z_t, so e^{-V_t} is the tilted
// density; log Z_t is analytic for Gaussian bases and zero otherwise.
struct TiltedPotential {
    std::shared_ptr<const Potential> base;
    double t = 0.0;
    VectorXd c;
    double log_partition = 0.0;

    TiltedPotential(std::shared_ptr<const Potential> base_, double t_, VectorXd c_)
        : base(std::move(base_)), t(t_), c(std::move(c_)) {
        if (base->gaussian)
            log_partition = gaussian_conjugacy(*base->gaussian, base->split.P, t, c).log_partition;
    }

    double value(const VectorXd& x) const {
        const double bv = base->value(x);
        if (std::isinf(bv)) return bv;
        return bv + 0.5 * t * x.dot(base->split.P * x) - c.dot(x) + log_partition;
    }

    VectorXd gradient(const VectorXd& x) const {
        return base->gradient(x) + t * (base->split.P * x) - c;
    }

    MatrixXd hessian_at(const VectorXd& x) const {
        return base->hessian_at(x) + t * base->split.P;
    }

    // min(eta, t): the tilt supplies curvature t on E_perp, the base eta on E.
    double curvature_floor() const { return std::min(base->eta, t); }

    GaussianConjugacy conjugacy() const {
        if (!base->gaussian) throw std::logic_error("conjugacy: base is not Gaussian");
        return gaussian_conjugacy(*base->gaussian, base->split.P, t, c);
    }

    bool in_support(const VectorXd& x) const { return base->in_support(x); }
};

struct WhitenResult {
    Potential potential;
    MatrixXd S;
    MatrixXd S_inv;
    double opnorm_Q = 0.0;
    double lambda_max_S = 0.0;  // sqrt(opnorm_Q); concentration radii divide by this
    double lambda_min_S = 0.0;
};

// Change of variables x -> Sx with S = B Q^{1/2} B' on E_perp and
// |Q|_op^{1/2} on E. The transformed measure has projected covariance I_k and
// curvature bound |Q|_op * eta.
inline WhitenResult whiten(const Potential& p, const MatrixXd& K) {
    const auto& split = p.split;
    const MatrixXd Q = split.restrict_perp(symmetrize(K));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::domain_error("whiten: projected covariance is singular");
    const double q_op = es.eigenvalues().maxCoeff();
    const MatrixXd q_half = sqrt_psd(Q);
    const MatrixXd Bp = split.basis_perp();
    MatrixXd S = Bp * q_half * Bp.transpose();
    if (split.k < split.n) S += std::sqrt(q_op) * split.P_E;
    S = symmetrize(S);
    const MatrixXd S_inv = S.llt().solve(MatrixXd::Identity(split.n, split.n));

    WhitenResult out;
    out.S = S;
    out.S_inv = S_inv;
    out.opnorm_Q = q_op;
    out.lambda_max_S = std::sqrt(q_op);
    out.lambda_min_S = std::sqrt(es.eigenvalues().minCoeff());

    Potential w;
    w.split = split;
    w.eta = q_op * p.eta;
    w.kind = p.kind;
    w.support_radius = std::isfinite(p.support_radius)
                           ? p.support_radius / out.lambda_min_S
                           : std::numeric_limits<double>::infinity();
    auto val = p.value;
    auto grad = p.gradient;
    w.value = [val, S](const VectorXd& x) { return val(S * x); };
    w.gradient = [grad, S](const VectorXd& x) -> VectorXd { return S * grad(S * x); };
    if (p.hessian) {
        auto hess = p.hessian;
        w.hessian = [hess, S](const VectorXd& x) -> MatrixXd {
            return S * hess(S * x) * S;
        };
    }
    if (p.gaussian) {
        const MatrixXd sigma_w = symmetrize(S_inv * p.gaussian->sigma * S_inv);
        w.gaussian = GaussianSpec{sigma_w, symmetrize(S * p.gaussian->precision * S)};
    }
    out.potential = std::move(w);
    return out;
}

}  // namespace subloc
