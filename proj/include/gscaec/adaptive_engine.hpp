#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "gscaec/gsc_core.hpp"

namespace gscaec {

/// Adaptive GSC weights. psi = [psi_hc; psi_b]; psi_hc is the echo canceler.
struct AdaptiveState {
  VectorXd psi;
  int aec_taps = 0;
  std::int64_t n = 0;

  static AdaptiveState zeros(const GscStructure& gsc) {
    return {VectorXd::Zero(gsc.n_psi()), gsc.aec_taps, 0};
  }
  auto psi_hc() { return psi.head(aec_taps); }
  auto psi_hc() const { return psi.head(aec_taps); }
  auto psi_b() { return psi.tail(psi.size() - aec_taps); }
  auto psi_b() const { return psi.tail(psi.size() - aec_taps); }
};

/// d = b^T (q_ext - B_ext psi)
double residual(const VectorXd& b, const VectorXd& psi, const GscStructure& gsc);

/// Split update: psi_hc += mu_aec u_hc d, psi_b += mu_bf B^T x_w d. Returns
/// the residual computed before the update. A zero step leaves its block
/// untouched.
double step_split(AdaptiveState& state, const VectorXd& b, double mu_aec, double mu_bf,
                  const GscStructure& gsc);

/// General update psi += M B_ext^T b d with a symmetric step matrix.
double step_general(AdaptiveState& state, const VectorXd& b, const MatrixXd& step,
                    const GscStructure& gsc);

/// diag(mu_aec I, mu_bf I) of size n_psi.
MatrixXd diagonal_step_matrix(const GscStructure& gsc, double mu_aec, double mu_bf);

/// Throws ConfigError unless `step` is symmetric (1e-10 relative) and
/// positive definite.
void validate_step_matrix(const MatrixXd& step);

/// lambda R_bloc^{-1}; every eigenvalue of L^T R_bloc L equals lambda.
MatrixXd quasi_newton_matrix(const MatrixXd& R_bloc, double lambda);

/// lambda = (2 / n_psi) (Jex_inf / J_inf)
double quasi_newton_lambda(double jex_inf, double j_inf, int n_psi);

struct ScalarPair {
  double mu_aec = 0;
  double mu_bf = 0;
};

struct FullMatrix {
  std::shared_ptr<const MatrixXd> step;
};

using StepMode = std::variant<ScalarPair, FullMatrix>;

/// Step matrix equivalent to `mode`.
MatrixXd step_matrix(const StepMode& mode, const GscStructure& gsc);

/// Applies one update under `mode`.
double step(AdaptiveState& state, const VectorXd& b, const StepMode& mode,
            const GscStructure& gsc);

/// Piecewise-constant step policy.
class StepPolicy {
 public:
  struct Segment {
    std::int64_t start = 0;
    StepMode mode;
  };

  explicit StepPolicy(StepMode initial);
  /// Segments must be appended with strictly increasing start.
  void add(std::int64_t start, StepMode mode);
  const StepMode& at(std::int64_t n) const;
  const std::vector<Segment>& segments() const { return segments_; }

 private:
  std::vector<Segment> segments_;
};

}  // namespace gscaec
