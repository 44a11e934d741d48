#include "gscaec/gsc_core.hpp"

#include <cmath>
#include <fmt/format.h>

#include "gscaec/errors.hpp"
#include "gscaec/linalg.hpp"

namespace gscaec {

Constraints build_constraints(int mics, int bf_taps, int n_f, const ResponseSpec& response) {
  if (mics < 1 || bf_taps < 1) throw ConfigError("constraints need M >= 1 and N_BF >= 1");
  if (n_f != bf_taps)
    throw ConfigError(fmt::format(
        "tap-sum constraints need N_f == N_BF (got N_f = {}, N_BF = {})", n_f, bf_taps));
  Constraints out{MatrixXd::Zero(mics * bf_taps, n_f), VectorXd::Zero(n_f)};
  for (int l = 0; l < bf_taps; ++l)
    for (int m = 0; m < mics; ++m) out.C(l * mics + m, l) = 1.0;
  switch (response.kind) {
    case ResponseKind::allpass:
      out.f(0) = 1.0;
      break;
    case ResponseKind::linear_phase:
      out.f(n_f / 2) = 1.0;
      break;
    case ResponseKind::custom:
      if (static_cast<int>(response.values.size()) != n_f)
        throw ConfigError(fmt::format("custom response has {} values, expected N_f = {}",
                                      response.values.size(), n_f));
      for (int i = 0; i < n_f; ++i) out.f(i) = response.values[i];
      break;
  }
  return out;
}

ExtendedConstraints extend_and_quiesce(const MatrixXd& C, const VectorXd& f, int aec_taps) {
  if (aec_taps < 0) throw ConfigError("N_AEC must be non-negative");
  if (f.size() != C.cols())
    throw ConfigError(fmt::format("response has {} entries for {} constraints", f.size(),
                                  C.cols()));
  ExtendedConstraints out;
  out.C_ext = MatrixXd::Zero(aec_taps + C.rows(), C.cols());
  out.C_ext.bottomRows(C.rows()) = C;
  const MatrixXd gram = C.transpose() * C;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().cwiseAbs().maxCoeff())
    throw NumericalError("constraint matrix is rank deficient");
  out.q_ext = out.C_ext * ldlt.solve(f);
  return out;
}

MatrixXd build_blocking(const MatrixXd& C) {
  const Eigen::Index n = C.rows(), k = C.cols();
  if (k > n) throw ConfigError(fmt::format("{} constraints exceed {} weights", k, n));
  Eigen::ColPivHouseholderQR<MatrixXd> qr(C);
  qr.setThreshold(1e-10);
  if (qr.rank() != k) throw NumericalError("constraint matrix is rank deficient");
  const MatrixXd Q = qr.householderQ();
  return Q.rightCols(n - k);
}

MatrixXd extend_blocking(const MatrixXd& B, int aec_taps) {
  MatrixXd out = MatrixXd::Zero(aec_taps + B.rows(), aec_taps + B.cols());
  out.topLeftCorner(aec_taps, aec_taps) = -MatrixXd::Identity(aec_taps, aec_taps);
  out.bottomRightCorner(B.rows(), B.cols()) = B;
  return out;
}

GscStructure GscStructure::from_constraints(MatrixXd C, VectorXd f, int aec_taps) {
  GscStructure g;
  auto ext = extend_and_quiesce(C, f, aec_taps);
  g.B = build_blocking(C);
  g.C = std::move(C);
  g.f = std::move(f);
  g.C_ext = std::move(ext.C_ext);
  g.q_ext = std::move(ext.q_ext);
  g.q = g.q_ext.tail(g.C.rows());
  g.aec_taps = aec_taps;
  g.B_ext = extend_blocking(g.B, aec_taps);
  return g;
}

GscStructure GscStructure::make(int mics, int bf_taps, int aec_taps,
                                const ResponseSpec& response) {
  auto c = build_constraints(mics, bf_taps, bf_taps, response);
  return from_constraints(std::move(c.C), std::move(c.f), aec_taps);
}

VectorXd GscStructure::direct_weights(const VectorXd& psi) const {
  VectorXd a = q_ext;
  a.head(aec_taps) += psi.head(aec_taps);
  a.tail(bf_size()).noalias() -= B * psi.tail(B.cols());
  return a;
}

SecondOrderStats optimal_solutions(const MatrixXd& R_bb, const GscStructure& gsc,
                                   double max_condition) {
  const int nb = gsc.n_b();
  if (R_bb.rows() != nb || R_bb.cols() != nb)
    throw ConfigError(fmt::format("R_bb is {}x{}, expected {}x{}", R_bb.rows(), R_bb.cols(), nb,
                                  nb));
  if (!linalg::is_symmetric(R_bb)) throw NumericalError("R_bb is not symmetric");
  const double cond = linalg::condition_number(R_bb);
  if (!(cond <= max_condition))
    throw NumericalError(fmt::format(
        "R_bb is ill-conditioned (condition {:.3g}); add near-end noise or regularize", cond));

  SecondOrderStats s;
  s.R_bb = R_bb;
  const auto llt = linalg::spd_factor(R_bb, "R_bb");
  const MatrixXd RiC = llt.solve(gsc.C_ext);
  const MatrixXd G = gsc.C_ext.transpose() * RiC;
  const auto gllt = linalg::spd_factor(linalg::symmetrize(G), "C_ext^T R_bb^{-1} C_ext");
  s.a_opt = RiC * gllt.solve(gsc.f);

  s.R_bloc = linalg::symmetrize(gsc.B_ext.transpose() * R_bb * gsc.B_ext);
  const auto bllt = linalg::spd_factor(s.R_bloc, "R_bloc");
  s.psi_opt = bllt.solve(gsc.B_ext.transpose() * (R_bb * gsc.q_ext));

  const VectorXd a_gsc = gsc.q_ext - gsc.B_ext * s.psi_opt;
  const double scale = std::max(s.a_opt.norm(), 1e-300);
  if ((a_gsc - s.a_opt).norm() > 1e-8 * scale)
    throw NumericalError(fmt::format(
        "direct and GSC optimal weights disagree (relative gap {:.3g})",
        (a_gsc - s.a_opt).norm() / scale));
  s.J_min = s.a_opt.dot(R_bb * s.a_opt);
  return s;
}

double output_power(const MatrixXd& R_bb, const GscStructure& gsc, const VectorXd& psi) {
  const VectorXd a = gsc.direct_weights(psi);
  return a.dot(R_bb * a);
}

}  // namespace gscaec
