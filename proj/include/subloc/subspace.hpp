// Orthonormal decomposition R^n = E + E_perp. The first k basis columns span
// E_perp; P projects onto E_perp and P_E onto E.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "subloc/linalg.hpp"
#include "subloc/philox.hpp"

namespace subloc {

struct SubspaceSplit {
    int n = 0;
    int k = 0;
    MatrixXd basis;  // n x n orthonormal, columns 0..k-1 span E_perp
    MatrixXd P;      // projector onto E_perp
    MatrixXd P_E;    // projector onto E

    MatrixXd basis_perp() const { return basis.leftCols(k); }
    MatrixXd basis_E() const { return basis.rightCols(n - k); }

    // Coordinates of the E_perp component in the perp basis (a k-vector).
    VectorXd to_perp(const VectorXd& x) const { return basis_perp().transpose() * x; }
    VectorXd from_perp(const VectorXd& y) const { return basis_perp() * y; }

    // Express a symmetric n x n matrix restricted to E_perp as k x k.
    MatrixXd restrict_perp(const MatrixXd& m) const {
        return basis_perp().transpose() * m * basis_perp();
    }

    static SubspaceSplit from_basis(const MatrixXd& basis, int k) {
        const int n = static_cast<int>(basis.rows());
        if (basis.cols() != n) throw std::invalid_argument("SubspaceSplit: basis must be square");
        if (k < 1 || k > n) throw std::invalid_argument("SubspaceSplit: k outside [1, n]");
        const double ortho_err =
            (basis.transpose() * basis - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
        if (ortho_err > 1e-10)
            throw std::invalid_argument("SubspaceSplit: basis columns not orthonormal");
        SubspaceSplit s;
        s.n = n;
        s.k = k;
        s.basis = basis;
        s.P = basis.leftCols(k) * basis.leftCols(k).transpose();
        s.P_E = MatrixXd::Identity(n, n) - s.P;
        return s;
    }

    // E_perp = span(e_1..e_k).
    static SubspaceSplit axis(int n, int k) {
        return from_basis(MatrixXd::Identity(n, n), k);
    }

    static SubspaceSplit rotated(int n, int k, std::uint64_t seed) {
        Philox rng(seed, stream_id(streams::kScratch, 0));
        return from_basis(random_orthogonal(n, rng), k);
    }
};

}  // namespace subloc
