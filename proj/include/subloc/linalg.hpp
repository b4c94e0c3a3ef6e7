// Small dense symmetric-matrix helpers shared across modules. Everything here
// goes through self-adjoint eigendecompositions; matrices are desk scale.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "subloc/philox.hpp"

namespace subloc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Operator norm of a symmetric matrix (largest |eigenvalue|).
inline double sym_opnorm(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("sym_opnorm: eigensolve failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double sym_min_eig(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("sym_min_eig: eigensolve failed");
    return es.eigenvalues().minCoeff();
}

// Clamp eigenvalues to [floor, inf). Returns the repaired matrix and reports
// the smallest eigenvalue seen so callers can warn on real violations.
inline MatrixXd psd_clamp(const MatrixXd& m, double floor, double* min_eig_seen = nullptr) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    if (es.info() != Eigen::Success) throw std::runtime_error("psd_clamp: eigensolve failed");
    if (min_eig_seen) *min_eig_seen = es.eigenvalues().minCoeff();
    const VectorXd lam = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// Symmetric PSD square root; tiny negative eigenvalues from roundoff are
// clamped to zero before the root.
inline MatrixXd sqrt_psd(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    if (es.info() != Eigen::Success) throw std::runtime_error("sqrt_psd: eigensolve failed");
    if (es.eigenvalues().minCoeff() < -1e-8 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
        throw std::domain_error("sqrt_psd: matrix is not PSD");
    const VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline double logdet_spd(const MatrixXd& m) {
    Eigen::LLT<MatrixXd> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) throw std::domain_error("logdet_spd: matrix is not SPD");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// Haar-distributed orthogonal matrix: QR of an iid normal matrix with the R
// diagonal sign fix.
inline MatrixXd random_orthogonal(int n, Philox& rng) {
    MatrixXd g(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ();
    const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline VectorXd random_unit_vector(int n, Philox& rng) {
    VectorXd v(n);
    double norm2;
    do {
        for (int i = 0; i < n; ++i) v(i) = rng.normal();
        norm2 = v.squaredNorm();
    } while (norm2 < 1e-24);
    return v / std::sqrt(norm2);
}

}  // namespace subloc
