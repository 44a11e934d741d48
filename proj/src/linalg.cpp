#include "gscaec/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <limits>

#include "gscaec/errors.hpp"

namespace gscaec::linalg {

bool is_symmetric(const MatrixXd& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& a, std::string_view what) {
  if (a.rows() != a.cols())
    throw NumericalError(fmt::format("{} is not square ({}x{})", what, a.rows(), a.cols()));
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double n = static_cast<double>(a.rows());
  const double floor = 1e-12 * a.trace() / n;
  if (floor > 0) {
    MatrixXd reg = a;
    reg.diagonal().array() += floor;
    llt.compute(reg);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError(fmt::format("{} is not symmetric positive definite", what));
}

double condition_number(const MatrixXd& a) {
  if (a.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

MatrixXd toeplitz(const VectorXd& r) {
  const Eigen::Index n = r.size();
  MatrixXd t(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) t(i, j) = r(i > j ? i - j : j - i);
  return t;
}

}  // namespace gscaec::linalg
