#include "gscaec/analytic_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "gscaec/errors.hpp"
#include "gscaec/linalg.hpp"

namespace gscaec {
namespace {

void fill_rho(ModelSetup& s) {
  s.rho = (1.0 - s.lambda.array()).square() + s.lambda.array().square();
}

// (1 - s^n) / (1 - s), accurate near s = 1.
double geometric_sum(double s, std::int64_t n) {
  const double nn = static_cast<double>(n);
  if (s > 0) {
    const double ls = std::log(s);
    if (std::abs(ls) < 1e-300) return nn;
    return std::expm1(nn * ls) / std::expm1(ls);
  }
  return (1.0 - std::pow(s, nn)) / (1.0 - s);
}

}  // namespace

MatrixXd ModelSetup::Phi() const {
  MatrixXd phi = lambda * lambda.transpose();
  phi.diagonal() += rho;
  return phi;
}

VectorXd ModelSetup::to_modal(const VectorXd& theta) const {
  return Q.transpose() * L.triangularView<Eigen::Lower>().solve(theta);
}

VectorXd ModelSetup::from_modal(const VectorXd& modal) const { return L * (Q * modal); }

VectorXd ModelSetup::modal_diagonal(const MatrixXd& R_theta) const {
  const auto Lt = L.triangularView<Eigen::Lower>();
  const MatrixXd Y = Lt.solve(R_theta);
  const MatrixXd X = Lt.solve(Y.transpose());
  return (Q.array() * (X * Q).array()).colwise().sum().transpose();
}

ModelSetup setup_model(const MatrixXd& R_bloc, const MatrixXd& step, double J_min) {
  if (R_bloc.rows() != R_bloc.cols() || step.rows() != R_bloc.rows() ||
      step.cols() != R_bloc.cols())
    throw ConfigError(fmt::format("model dimensions disagree: R_bloc {}x{}, step {}x{}",
                                  R_bloc.rows(), R_bloc.cols(), step.rows(), step.cols()));
  if (J_min < 0) throw ConfigError("J_min must be non-negative");
  ModelSetup s;
  s.R_bloc = R_bloc;
  s.step = step;
  s.J_min = J_min;
  if (!linalg::is_symmetric(step)) throw NumericalError("step matrix is not symmetric");
  Eigen::LLT<MatrixXd> llt(step);
  if (llt.info() != Eigen::Success) throw NumericalError("step matrix is not positive definite");
  s.L = llt.matrixL();
  const MatrixXd R_mod = linalg::symmetrize(s.L.transpose() * R_bloc * s.L);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(R_mod);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of R_mod failed");
  const Eigen::Index n = R_mod.rows();
  s.lambda = es.eigenvalues().reverse();
  s.Q = es.eigenvectors().rowwise().reverse();
  const double floor = n > 0 ? 1e-12 * R_mod.trace() / static_cast<double>(n) : 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (s.lambda(i) < floor) {
      s.lambda(i) = floor;
      ++s.clamped;
    }
  fill_rho(s);
  return s;
}

ModelSetup setup_from_lambda(const VectorXd& lambda, double J_min) {
  if ((lambda.array() <= 0).any()) throw ConfigError("eigenvalues must be positive");
  const Eigen::Index n = lambda.size();
  ModelSetup s;
  s.R_bloc = lambda.asDiagonal();
  s.step = MatrixXd::Identity(n, n);
  s.J_min = J_min;
  s.L = MatrixXd::Identity(n, n);
  s.Q = MatrixXd::Identity(n, n);
  s.lambda = lambda;
  fill_rho(s);
  return s;
}

std::vector<VectorXd> mean_weight_curve(const ModelSetup& setup, const VectorXd& theta0,
                                        std::int64_t n_max) {
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(n_max + 1));
  VectorXd modal = setup.to_modal(theta0);
  const VectorXd factor = 1.0 - setup.lambda.array();
  for (std::int64_t n = 0; n <= n_max; ++n) {
    out.push_back(setup.from_modal(modal));
    modal.array() *= factor.array();
  }
  return out;
}

VectorXd initial_nu(const ModelSetup& setup, const VectorXd& psi_opt) {
  return setup.to_modal(-psi_opt).array().square();
}

void advance_nu(const ModelSetup& setup, VectorXd& nu) {
  const double coupling = setup.lambda.dot(nu) + setup.J_min;
  nu = setup.rho.cwiseProduct(nu) + coupling * setup.lambda;
}

std::vector<VectorXd> nu_curve(const ModelSetup& setup, const VectorXd& nu0, std::int64_t n_max) {
  if ((nu0.array() < 0).any()) throw ConfigError("nu0 must be elementwise non-negative");
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(n_max + 1));
  VectorXd nu = nu0;
  out.push_back(nu);
  for (std::int64_t n = 0; n < n_max; ++n) {
    advance_nu(setup, nu);
    out.push_back(nu);
  }
  return out;
}

std::vector<double> mop_curve(const ModelSetup& setup, const std::vector<VectorXd>& nu) {
  std::vector<double> J(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) J[i] = setup.J_min + setup.lambda.dot(nu[i]);
  return J;
}

std::vector<double> mop_from_nu0(const ModelSetup& setup, VectorXd nu0, std::int64_t n_max) {
  std::vector<double> J;
  J.reserve(static_cast<std::size_t>(n_max + 1));
  for (std::int64_t n = 0; n <= n_max; ++n) {
    J.push_back(setup.J_min + setup.lambda.dot(nu0));
    if (n < n_max) advance_nu(setup, nu0);
  }
  return J;
}

NuClosedForm::NuClosedForm(const ModelSetup& setup, const VectorXd& nu0) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(setup.Phi());
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of Phi failed");
  V_ = es.eigenvectors();
  sigma_ = es.eigenvalues();
  c0_ = V_.transpose() * nu0;
  cl_ = setup.J_min * (V_.transpose() * setup.lambda);
}

VectorXd NuClosedForm::at(std::int64_t n) const {
  VectorXd c(sigma_.size());
  for (Eigen::Index i = 0; i < sigma_.size(); ++i)
    c(i) = std::pow(sigma_(i), static_cast<double>(n)) * c0_(i) +
           geometric_sum(sigma_(i), n) * cl_(i);
  return V_ * c;
}

MatrixXd full_matrix_step(const MatrixXd& R_bloc, const MatrixXd& step, double J_min,
                          const MatrixXd& R_theta) {
  const MatrixXd MA = step * R_bloc;
  const MatrixXd MAR = MA * R_theta;
  const MatrixXd MAM = MA * step;
  const double tr = (R_bloc * R_theta).trace();
  MatrixXd next = R_theta - MAR - MAR.transpose() + 2.0 * MAR * MA.transpose() +
                  (tr + J_min) * MAM;
  return linalg::symmetrize(next);
}

std::vector<double> full_matrix_recursion(const MatrixXd& R_bloc, const MatrixXd& step,
                                          double J_min, const MatrixXd& R_theta0,
                                          std::int64_t n_max) {
  const Eigen::Index n = R_bloc.rows();
  if (R_bloc.cols() != n || step.rows() != n || step.cols() != n || R_theta0.rows() != n ||
      R_theta0.cols() != n)
    throw ConfigError("full recursion: matrix dimensions disagree");
  std::vector<double> J;
  J.reserve(static_cast<std::size_t>(n_max + 1));
  MatrixXd R = R_theta0;
  for (std::int64_t k = 0; k <= n_max; ++k) {
    J.push_back(J_min + (R_bloc * R).trace());
    if (k < n_max) R = full_matrix_step(R_bloc, step, J_min, R);
  }
  return J;
}

double phi_spectral_radius(const VectorXd& lambda) {
  if (lambda.size() == 0) return 0.0;
  MatrixXd phi = lambda * lambda.transpose();
  phi.diagonal().array() += (1.0 - lambda.array()).square() + lambda.array().square();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(phi, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

StabilityReport stability_report(const ModelSetup& setup, std::optional<SplitTrace> split) {
  constexpr double bound = StabilityReport::kTraceBound;
  StabilityReport r;
  r.max_abs_eig_phi = phi_spectral_radius(setup.lambda);
  r.eig_stable = r.max_abs_eig_phi < 1.0;
  r.trace = setup.trace();
  const double lmax = setup.size() > 0 ? setup.lambda.maxCoeff() : 0.0;
  r.gershgorin_value = 2.0 * lmax + r.trace;
  r.gershgorin_stable = r.gershgorin_value < 2.0;
  r.trace_marginal = std::abs(r.trace - bound) <= 1e-12;
  r.trace_stable = r.trace < bound && !r.trace_marginal;
  if (split) {
    r.split_value = split->total();
    r.split_stable = *r.split_value < bound && std::abs(*r.split_value - bound) > 1e-12;
  }
  return r;
}

std::string_view to_string(JexVariant v) {
  switch (v) {
    case JexVariant::exact: return "exact";
    case JexVariant::trace_approx: return "trace_approx";
    case JexVariant::block: return "block";
    case JexVariant::simplified: return "simplified";
  }
  return "?";
}

double steady_state_jex(const VectorXd& lambda, double J_min, JexVariant variant,
                        std::optional<SplitTrace> split) {
  const double t = lambda.sum();
  switch (variant) {
    case JexVariant::exact: {
      if ((lambda.array() >= 1.0).any())
        throw NumericalError("steady state undefined: an eigenvalue reaches 1");
      const double s = 0.5 * (lambda.array() / (1.0 - lambda.array())).sum();
      if (!(1.0 - s > 0))
        throw NumericalError(fmt::format(
            "steady state undefined: 1 - sum lambda/(2(1-lambda)) = {:.6g} <= 0", 1.0 - s));
      return J_min * s / (1.0 - s);
    }
    case JexVariant::trace_approx:
      if (!(t < 2.0)) throw NumericalError("steady state undefined: trace >= 2");
      return J_min * (0.5 * t) / (1.0 - 0.5 * t);
    case JexVariant::block: {
      const double tb = split ? split->total() : t;
      if (!(tb < 2.0)) throw NumericalError("steady state undefined: split trace >= 2");
      return J_min * tb / (2.0 - tb);
    }
    case JexVariant::simplified:
      return J_min * 0.5 * (split ? split->total() : t);
  }
  return 0.0;
}

ErrorMoments propagate_segment(const MatrixXd& R_bloc, const MatrixXd& step, double J_min,
                               const ErrorMoments& start, std::int64_t n,
                               std::vector<double>* J_out) {
  const Eigen::Index N = R_bloc.rows();
  if (step.rows() != N || step.cols() != N || start.mean.size() != N ||
      start.second.rows() != N || start.second.cols() != N)
    throw ConfigError("segment model: dimensions disagree");
  if (n < 0) throw ConfigError("segment length must be non-negative");

  std::vector<Eigen::Index> act, frz;
  for (Eigen::Index i = 0; i < N; ++i)
    (step.row(i).cwiseAbs().maxCoeff() > 0 ? act : frz).push_back(i);
  for (Eigen::Index i : frz)
    if (step.col(i).cwiseAbs().maxCoeff() > 0)
      throw NumericalError("step matrix couples frozen and adapting weights");

  if (act.empty()) {
    const double J = J_min + (R_bloc * start.second).trace();
    if (J_out) J_out->insert(J_out->end(), static_cast<std::size_t>(n), J);
    return start;
  }

  const auto na = static_cast<Eigen::Index>(act.size());
  const auto nf = static_cast<Eigen::Index>(frz.size());
  auto sub = [](const MatrixXd& X, const std::vector<Eigen::Index>& r,
                const std::vector<Eigen::Index>& c) {
    MatrixXd out(r.size(), c.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = X(r[i], c[j]);
    return out;
  };
  auto subv = [](const VectorXd& x, const std::vector<Eigen::Index>& r) {
    VectorXd out(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out(i) = x(r[i]);
    return out;
  };

  const MatrixXd A_aa = sub(R_bloc, act, act), A_af = sub(R_bloc, act, frz);
  const MatrixXd A_ff = sub(R_bloc, frz, frz);
  const MatrixXd M_aa = sub(step, act, act);
  const MatrixXd R_aa = sub(start.second, act, act), R_af = sub(start.second, act, frz);
  const MatrixXd R_ff = sub(start.second, frz, frz);
  const VectorXd m_a = subv(start.mean, act), m_f = subv(start.mean, frz);

  // phi = theta_a + K theta_f is the active error relative to the best
  // active weights for the current frozen weights.
  const MatrixXd K = nf > 0 ? MatrixXd(linalg::spd_factor(A_aa, "R_bloc (adapting block)").solve(A_af))
                            : MatrixXd(na, 0);
  const MatrixXd S = A_ff - A_af.transpose() * K;
  const VectorXd m_phi = m_a + K * m_f;
  const MatrixXd R_phif = R_af + K * R_ff;
  const MatrixXd R_phiphi = linalg::symmetrize(R_aa + K * R_af.transpose() + R_af * K.transpose() +
                                               K * R_ff * K.transpose());
  const double J_eff = J_min + (S * R_ff).trace();

  const ModelSetup setup = setup_model(A_aa, M_aa, J_eff);
  const auto Lt = setup.L.triangularView<Eigen::Lower>();
  const MatrixXd QtLi = setup.Q.transpose() * Lt.solve(MatrixXd::Identity(na, na));
  MatrixXd Rt = QtLi * R_phiphi * QtLi.transpose();
  VectorXd nu = Rt.diagonal();

  if (J_out) J_out->reserve(J_out->size() + static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    if (J_out) J_out->push_back(J_eff + setup.lambda.dot(nu));
    advance_nu(setup, nu);
  }

  const double nn = static_cast<double>(n);
  const VectorXd& lam = setup.lambda;
  const VectorXd decay = (1.0 - lam.array()).pow(nn);
  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index j = 0; j < na; ++j)
      Rt(i, j) = i == j ? nu(i)
                        : Rt(i, j) * std::pow(1.0 - lam(i) - lam(j) + 2.0 * lam(i) * lam(j), nn);
  const VectorXd mt = decay.cwiseProduct(QtLi * m_phi);
  const MatrixXd Xt = decay.asDiagonal() * (QtLi * R_phif);

  const MatrixXd T = setup.L * setup.Q;
  const MatrixXd R_phiphi_n = T * Rt * T.transpose();
  const VectorXd m_phi_n = T * mt;
  const MatrixXd R_phif_n = T * Xt;

  const VectorXd m_a_n = m_phi_n - K * m_f;
  const MatrixXd R_af_n = R_phif_n - K * R_ff;
  const MatrixXd R_aa_n = R_phiphi_n - R_phif_n * K.transpose() - K * R_phif_n.transpose() +
                          K * R_ff * K.transpose();

  ErrorMoments out{start.mean, start.second};
  for (Eigen::Index i = 0; i < na; ++i) {
    out.mean(act[i]) = m_a_n(i);
    for (Eigen::Index j = 0; j < na; ++j) out.second(act[i], act[j]) = R_aa_n(i, j);
    for (Eigen::Index j = 0; j < nf; ++j) {
      out.second(act[i], frz[j]) = R_af_n(i, j);
      out.second(frz[j], act[i]) = R_af_n(i, j);
    }
  }
  out.second = linalg::symmetrize(out.second);
  return out;
}

}  // namespace gscaec
