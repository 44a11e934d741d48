#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace gscaec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Step-matrix transform of one stationary setting. With M = L L^T the
/// weight errors are mapped to theta~ = Q^T L^{-1} theta, where
/// L^T R_bloc L = Q diag(lambda) Q^T.
struct ModelSetup {
  MatrixXd R_bloc;
  MatrixXd step;
  double J_min = 0;
  MatrixXd L;
  MatrixXd Q;
  VectorXd lambda;  // descending
  VectorXd rho;     // (1 - lambda)^2 + lambda^2
  int clamped = 0;  // eigenvalues raised to the floor

  int size() const { return static_cast<int>(lambda.size()); }
  double trace() const { return lambda.sum(); }
  /// diag(rho) + lambda lambda^T
  MatrixXd Phi() const;
  /// theta (psi coordinates) -> theta~
  VectorXd to_modal(const VectorXd& theta) const;
  VectorXd from_modal(const VectorXd& modal) const;
  /// Diagonal of the modal image of a weight-error correlation matrix.
  VectorXd modal_diagonal(const MatrixXd& R_theta) const;
};

/// Eigenvalues below 1e-12 tr/N are clamped to that floor.
ModelSetup setup_model(const MatrixXd& R_bloc, const MatrixXd& step, double J_min);

/// Setup from a bare eigenvalue vector (identity transform).
ModelSetup setup_from_lambda(const VectorXd& lambda, double J_min);

/// E{theta[n]} for n = 0..n_max in psi coordinates.
std::vector<VectorXd> mean_weight_curve(const ModelSetup& setup, const VectorXd& theta0,
                                        std::int64_t n_max);

/// Default initial condition for psi[0] = 0.
VectorXd initial_nu(const ModelSetup& setup, const VectorXd& psi_opt);

/// One step of nu <- Phi nu + J_min lambda, in O(N).
void advance_nu(const ModelSetup& setup, VectorXd& nu);

/// nu[n] for n = 0..n_max.
std::vector<VectorXd> nu_curve(const ModelSetup& setup, const VectorXd& nu0, std::int64_t n_max);

/// J[n] = J_min + lambda^T nu[n]
std::vector<double> mop_curve(const ModelSetup& setup, const std::vector<VectorXd>& nu);

/// J[n] for n = 0..n_max without storing nu.
std::vector<double> mop_from_nu0(const ModelSetup& setup, VectorXd nu0, std::int64_t n_max);

/// nu[n] = Phi^n nu0 + J_min sum_{j<n} Phi^j lambda via the eigenpairs of Phi.
class NuClosedForm {
 public:
  NuClosedForm(const ModelSetup& setup, const VectorXd& nu0);
  VectorXd at(std::int64_t n) const;
  const VectorXd& phi_eigenvalues() const { return sigma_; }

 private:
  MatrixXd V_;
  VectorXd sigma_;
  VectorXd c0_;  // V^T nu0
  VectorXd cl_;  // J_min V^T lambda
};

/// Dense correlation-matrix recursion in psi coordinates; J[n] = J_min +
/// tr(R_bloc R_theta[n]) for n = 0..n_max.
std::vector<double> full_matrix_recursion(const MatrixXd& R_bloc, const MatrixXd& step,
                                          double J_min, const MatrixXd& R_theta0,
                                          std::int64_t n_max);

/// One step of the dense recursion.
MatrixXd full_matrix_step(const MatrixXd& R_bloc, const MatrixXd& step, double J_min,
                          const MatrixXd& R_theta);

/// Split traces mu_aec tr(R_u) and mu_bf tr(B^T R_xx B).
struct SplitTrace {
  double aec = 0;
  double bf = 0;
  double total() const { return aec + bf; }
};

struct StabilityReport {
  double max_abs_eig_phi = 0;
  bool eig_stable = false;
  double gershgorin_value = 0;  // 2 max(lambda) + tr
  bool gershgorin_stable = false;
  double trace = 0;
  bool trace_stable = false;
  bool trace_marginal = false;  // exactly at the bound
  std::optional<double> split_value;
  std::optional<bool> split_stable;

  static constexpr double kTraceBound = 2.0 / 3.0;
  bool stable() const { return eig_stable; }
};

StabilityReport stability_report(const ModelSetup& setup,
                                 std::optional<SplitTrace> split = std::nullopt);

/// max |eig(diag(rho) + lambda lambda^T)|
double phi_spectral_radius(const VectorXd& lambda);

enum class JexVariant { exact, trace_approx, block, simplified };
std::string_view to_string(JexVariant v);

/// Steady-state excess output power. `block` and `simplified` use the split
/// traces when given and the eigenvalue sum otherwise. The exact form throws NumericalError
/// when its denominator is not positive.
double steady_state_jex(const VectorXd& lambda, double J_min, JexVariant variant,
                        std::optional<SplitTrace> split = std::nullopt);

/// Weight-error moments in psi coordinates.
struct ErrorMoments {
  VectorXd mean;    // E{theta}
  MatrixXd second;  // E{theta theta^T}
};

/// Propagates weight-error moments through n samples of one stationary
/// segment and appends J at each sample (before its update) to `J_out`.
/// `step` may be singular when whole rows are zero (frozen blocks); the
/// remaining principal submatrix must be positive definite.
ErrorMoments propagate_segment(const MatrixXd& R_bloc, const MatrixXd& step, double J_min,
                               const ErrorMoments& start, std::int64_t n,
                               std::vector<double>* J_out);

}  // namespace gscaec
