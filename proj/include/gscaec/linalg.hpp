#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string_view>

namespace gscaec::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative symmetry check: max |A - A^T| <= tol * max |A|.
bool is_symmetric(const MatrixXd& a, double rel_tol = 1e-10);

/// Cholesky factor of an SPD matrix. When the plain factorization fails a
/// diagonal floor of 1e-12 * trace / N is added once before giving up with
/// NumericalError. `what` names the matrix in the diagnostic.
Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& a, std::string_view what);

/// Ratio of extreme eigenvalues of a symmetric matrix (infinity if the
/// smallest is not positive).
double condition_number(const MatrixXd& a);

/// Symmetric Toeplitz matrix with first column r.
MatrixXd toeplitz(const VectorXd& r);

/// 0.5 * (A + A^T)
inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace gscaec::linalg
