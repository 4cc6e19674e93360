#pragma once

#include <Eigen/Dense>

#include <functional>

namespace fieldharm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending, eigenvectors in
/// the matching columns.
struct SymEig {
    Vector values;
    Matrix vectors;
    int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition.
///
/// Rows are swept in fixed (p, q) order with p < q, so the result is
/// bit-reproducible. A rotation is skipped once |a_pq| is negligible relative
/// to sqrt(|a_pp a_qq|); the decomposition has converged when a whole sweep
/// performs no rotation. The relative test keeps tiny eigenvalues accurate for
/// badly scaled inputs (e.g. covariances in volts^2 padded with an identity
/// block), which a test against ||A||_F alone would not.
SymEig eigh(const Matrix& a);

/// V f(Lambda) V^T for a precomputed decomposition.
Matrix apply_spectral(const SymEig& eig, const std::function<double(double)>& fn);

/// Relative Frobenius asymmetry ||A - A^T||_F / ||A||_F (0 for the zero matrix).
double asymmetry(const Matrix& a);

/// (A + A^T) / 2
inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace fieldharm
