#include "gscaec/adaptive_engine.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "gscaec/errors.hpp"
#include "gscaec/linalg.hpp"

namespace gscaec {
namespace {

void check_dims(const VectorXd& b, const VectorXd& psi, const GscStructure& gsc) {
  if (b.size() != gsc.n_b() || psi.size() != gsc.n_psi())
    throw ConfigError(fmt::format("dimension mismatch: |b| = {} (expected {}), |psi| = {} "
                                  "(expected {})",
                                  b.size(), gsc.n_b(), psi.size(), gsc.n_psi()));
}

}  // namespace

double residual(const VectorXd& b, const VectorXd& psi, const GscStructure& gsc) {
  check_dims(b, psi, gsc);
  const int na = gsc.aec_taps;
  const auto x_w = b.tail(gsc.bf_size());
  const VectorXd w = gsc.q - gsc.B * psi.tail(psi.size() - na);
  return b.head(na).dot(psi.head(na)) + x_w.dot(w);
}

double step_split(AdaptiveState& state, const VectorXd& b, double mu_aec, double mu_bf,
                  const GscStructure& gsc) {
  const double d = residual(b, state.psi, gsc);
  // Same operation order as step_general so diagonal steps agree bit-for-bit.
  if (mu_aec != 0.0) state.psi_hc() -= mu_aec * (b.head(gsc.aec_taps) * d);
  if (mu_bf != 0.0) {
    const VectorXd gb = gsc.B.transpose() * b.tail(gsc.bf_size());
    state.psi_b() += mu_bf * (gb * d);
  }
  ++state.n;
  return d;
}

double step_general(AdaptiveState& state, const VectorXd& b, const MatrixXd& step,
                    const GscStructure& gsc) {
  const double d = residual(b, state.psi, gsc);
  VectorXd g(gsc.n_psi());
  g.head(gsc.aec_taps) = -b.head(gsc.aec_taps);
  const VectorXd gb = gsc.B.transpose() * b.tail(gsc.bf_size());
  g.tail(gsc.B.cols()) = gb;
  const VectorXd gd = g * d;
  state.psi.noalias() += step * gd;
  ++state.n;
  return d;
}

MatrixXd diagonal_step_matrix(const GscStructure& gsc, double mu_aec, double mu_bf) {
  VectorXd diag(gsc.n_psi());
  diag.head(gsc.aec_taps).setConstant(mu_aec);
  diag.tail(gsc.B.cols()).setConstant(mu_bf);
  return diag.asDiagonal();
}

void validate_step_matrix(const MatrixXd& step) {
  if (!linalg::is_symmetric(step, 1e-10)) throw ConfigError("step matrix is not symmetric");
  Eigen::LLT<MatrixXd> llt(step);
  if (llt.info() != Eigen::Success) throw ConfigError("step matrix is not positive definite");
}

MatrixXd quasi_newton_matrix(const MatrixXd& R_bloc, double lambda) {
  if (!(lambda > 0)) throw ConfigError("quasi-Newton lambda must be positive");
  const double cond = linalg::condition_number(R_bloc);
  if (!(cond <= kMaxCondition))
    throw NumericalError(fmt::format("R_bloc is ill-conditioned (condition {:.3g})", cond));
  const auto llt = linalg::spd_factor(R_bloc, "R_bloc");
  const MatrixXd inv = llt.solve(MatrixXd::Identity(R_bloc.rows(), R_bloc.cols()));
  return linalg::symmetrize(lambda * inv);
}

double quasi_newton_lambda(double jex_inf, double j_inf, int n_psi) {
  if (!(j_inf > 0) || jex_inf < 0 || n_psi < 1)
    throw ConfigError("quasi-Newton target needs J_inf > 0, Jex_inf >= 0, n_psi >= 1");
  return 2.0 / n_psi * (jex_inf / j_inf);
}

MatrixXd step_matrix(const StepMode& mode, const GscStructure& gsc) {
  if (const auto* p = std::get_if<ScalarPair>(&mode))
    return diagonal_step_matrix(gsc, p->mu_aec, p->mu_bf);
  return *std::get<FullMatrix>(mode).step;
}

double step(AdaptiveState& state, const VectorXd& b, const StepMode& mode,
            const GscStructure& gsc) {
  if (const auto* p = std::get_if<ScalarPair>(&mode))
    return step_split(state, b, p->mu_aec, p->mu_bf, gsc);
  return step_general(state, b, *std::get<FullMatrix>(mode).step, gsc);
}

StepPolicy::StepPolicy(StepMode initial) { segments_.push_back({0, std::move(initial)}); }

void StepPolicy::add(std::int64_t start, StepMode mode) {
  if (start <= segments_.back().start)
    throw ConfigError(fmt::format("policy segment at {} does not follow segment at {}", start,
                                  segments_.back().start));
  segments_.push_back({start, std::move(mode)});
}

const StepMode& StepPolicy::at(std::int64_t n) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), n,
                             [](std::int64_t v, const Segment& s) { return v < s.start; });
  return std::prev(it)->mode;
}

}  // namespace gscaec
