#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gscaec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ResponseKind { allpass, linear_phase, custom };

/// Desired look-direction response of the beamformer taps.
struct ResponseSpec {
  ResponseKind kind = ResponseKind::allpass;
  std::vector<double> values;  // custom only

  bool operator==(const ResponseSpec&) const = default;
};

struct Constraints {
  MatrixXd C;  // (M*N_BF) x N_f
  VectorXd f;
};

/// Broadside tap-sum constraints: column l of C selects the M weights of tap l.
/// The built-in family requires N_f == N_BF.
Constraints build_constraints(int mics, int bf_taps, int n_f, const ResponseSpec& response);

/// C_ext = [0; C] and its minimum-norm solution q_ext = C_ext (C_ext^T C_ext)^{-1} f.
struct ExtendedConstraints {
  MatrixXd C_ext;
  VectorXd q_ext;
};
ExtendedConstraints extend_and_quiesce(const MatrixXd& C, const VectorXd& f, int aec_taps);

/// Orthonormal basis of null(C^T).
MatrixXd build_blocking(const MatrixXd& C);

/// blockdiag(-I_{aec_taps}, B)
MatrixXd extend_blocking(const MatrixXd& B, int aec_taps);

struct GscStructure {
  MatrixXd C;
  VectorXd f;
  MatrixXd C_ext;
  VectorXd q;      // beamformer part of q_ext
  VectorXd q_ext;
  MatrixXd B;
  MatrixXd B_ext;
  int aec_taps = 0;

  int bf_size() const { return static_cast<int>(C.rows()); }
  int n_f() const { return static_cast<int>(C.cols()); }
  int n_b() const { return aec_taps + bf_size(); }
  int n_psi() const { return aec_taps + static_cast<int>(B.cols()); }

  /// Builds every derived object from (C, f). Throws on rank deficiency.
  static GscStructure from_constraints(MatrixXd C, VectorXd f, int aec_taps);
  static GscStructure make(int mics, int bf_taps, int aec_taps, const ResponseSpec& response);

  /// a = q_ext - B_ext psi
  VectorXd direct_weights(const VectorXd& psi) const;
};

struct SecondOrderStats {
  MatrixXd R_bb;
  MatrixXd R_bloc;
  VectorXd a_opt;
  VectorXd psi_opt;
  double J_min = 0;

  /// Trace of the AEC input block, tr(R_u).
  double trace_aec(int aec_taps) const { return R_bb.topLeftCorner(aec_taps, aec_taps).trace(); }
  /// Trace of the blocked beamformer input block, tr(B^T R_xx B).
  double trace_bf(int aec_taps) const {
    return R_bloc.bottomRightCorner(R_bloc.rows() - aec_taps, R_bloc.cols() - aec_taps).trace();
  }
};

/// Largest accepted condition number of R_bb.
inline constexpr double kMaxCondition = 1e12;

SecondOrderStats optimal_solutions(const MatrixXd& R_bb, const GscStructure& gsc,
                                   double max_condition = kMaxCondition);

/// Mean output power of the direct-form weights implied by psi.
double output_power(const MatrixXd& R_bb, const GscStructure& gsc, const VectorXd& psi);

}  // namespace gscaec
