#include <doctest.h>

#include <cmath>

#include "gscaec/errors.hpp"
#include "gscaec/gsc_core.hpp"
#include "gscaec/signal_model.hpp"
#include "oracles.hpp"

using namespace gscaec;

namespace {

// M=2, N_h=128, N_BF=16, N_AEC=128 with AR1(-0.9) input and 1e-2 noise.
struct Fig4Setup {
  GscStructure gsc;
  MatrixXd R_bb;
};

Fig4Setup fig4_setup(ResponseKind kind) {
  PlantSpec ps;
  ps.mics = 2;
  ps.taps = 128;
  ps.oversample = 4;
  ps.seed = 1;
  const MatrixXd H = gen_lem_plant(ps).H;
  Fig4Setup s{GscStructure::make(2, 16, 128, ResponseSpec{kind, {}}), {}};
  s.R_bb = analytic_Rbb(FarEndModel::ar1(-0.9), build_modified_channel_matrix(H, 16),
                        NearEndModel{1e-2, {}}, RegressorDims{2, 16, 128});
  return s;
}

}  // namespace

TEST_CASE("constraint examples") {
  const auto c = build_constraints(2, 1, 1, ResponseSpec{ResponseKind::allpass, {}});
  CHECK(c.C.rows() == 2);
  CHECK(c.C.cols() == 1);
  CHECK(c.C(0, 0) == 1.0);
  CHECK(c.C(1, 0) == 1.0);
  CHECK(c.f.size() == 1);
  CHECK(c.f(0) == 1.0);

  const auto a = build_constraints(2, 16, 16, ResponseSpec{ResponseKind::allpass, {}});
  VectorXd e = VectorXd::Zero(16);
  e(0) = 1;
  CHECK(a.f == e);

  const auto lp = build_constraints(3, 16, 16, ResponseSpec{ResponseKind::linear_phase, {}});
  VectorXd e8 = VectorXd::Zero(16);
  e8(8) = 1;
  CHECK(lp.f == e8);
  const auto lp5 = build_constraints(2, 5, 5, ResponseSpec{ResponseKind::linear_phase, {}});
  CHECK(lp5.f(2) == 1.0);
  CHECK(lp5.f.sum() == 1.0);

  const auto cu = build_constraints(2, 2, 2, ResponseSpec{ResponseKind::custom, {0.0, 1.0}});
  VectorXd w(4);  // snapshot-major: tap 0 mics, tap 1 mics
  w << 0.3, -0.3, 0.4, 0.6;
  const VectorXd got = cu.C.transpose() * w;
  CHECK(got(0) == doctest::Approx(0.0));
  CHECK(got(1) == doctest::Approx(1.0));
  CHECK(cu.f == got);

  CHECK_THROWS_AS(build_constraints(2, 4, 3, ResponseSpec{}), ConfigError);
  CHECK_THROWS_AS(build_constraints(2, 2, 2, ResponseSpec{ResponseKind::custom, {1.0}}), ConfigError);
}

TEST_CASE("quiescent vector examples") {
  MatrixXd C(2, 1);
  C << 1, 1;
  VectorXd f(1);
  f << 1;
  const auto e = extend_and_quiesce(C, f, 1);
  CHECK(e.C_ext.rows() == 3);
  CHECK(e.C_ext(0, 0) == 0.0);
  CHECK(e.q_ext(0) == 0.0);
  CHECK(e.q_ext(1) == doctest::Approx(0.5));
  CHECK(e.q_ext(2) == doctest::Approx(0.5));

  std::mt19937_64 rng(3);
  const MatrixXd Cr = oracle::random_matrix(4, 2, rng);
  CHECK(extend_and_quiesce(Cr, VectorXd::Zero(2), 3).q_ext.isZero(0));
  for (int t = 0; t < 10; ++t) {
    const MatrixXd Ct = oracle::random_matrix(4, 2, rng);
    const VectorXd ft = oracle::random_vector(2, rng);
    const auto et = extend_and_quiesce(Ct, ft, 3);
    CHECK(et.q_ext.head(3).isZero(0));
    const VectorXd ref = oracle::least_norm(et.C_ext.transpose(), ft);
    CHECK((et.q_ext - ref).norm() < 1e-12 * ref.norm());
  }

  MatrixXd dup(4, 2);
  dup << 1, 1, 2, 2, 3, 3, 4, 4;
  CHECK_THROWS(extend_and_quiesce(dup, VectorXd::Ones(2), 1));
}

TEST_CASE("blocking matrix examples") {
  MatrixXd C(2, 1);
  C << 1, 1;
  const MatrixXd B = build_blocking(C);
  REQUIRE(B.cols() == 1);
  CHECK(std::abs(B(0, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(B(1, 0) == doctest::Approx(-B(0, 0)));
  CHECK(std::abs((C.transpose() * B)(0, 0)) < 1e-15);

  const auto full = build_constraints(2, 2, 2, ResponseSpec{});
  // N_f = M N_BF only when M = 1 for the tap-sum family
  const auto one = build_constraints(1, 3, 3, ResponseSpec{});
  const MatrixXd B0 = build_blocking(one.C);
  CHECK(B0.cols() == 0);
  const MatrixXd B0e = extend_blocking(B0, 2);
  CHECK(B0e.rows() == 5);
  CHECK(B0e.cols() == 2);
  CHECK(B0e.topRows(2) == -MatrixXd::Identity(2, 2));
  CHECK(B0e.bottomRows(3).isZero(0));
  CHECK(build_blocking(full.C).cols() == 2);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd Cr = oracle::random_matrix(6, 2, rng);
    const MatrixXd Br = build_blocking(Cr);
    CHECK(Br.cols() == 4);
    CHECK((Br.transpose() * Br - MatrixXd::Identity(4, 4)).norm() < 1e-12);
    CHECK((Cr.transpose() * Br).norm() < 1e-12);
    const auto g = GscStructure::from_constraints(Cr, oracle::random_vector(2, rng), 3);
    CHECK((g.C_ext.transpose() * g.B_ext).norm() < 1e-10);
    CHECK((g.B_ext.transpose() * g.B_ext - MatrixXd::Identity(g.n_psi(), g.n_psi())).norm() < 1e-10);
    CHECK(g.B_ext.topLeftCorner(3, 3) == -MatrixXd::Identity(3, 3));
    CHECK(g.B_ext.topRightCorner(3, 4).isZero(0));
    CHECK(g.B_ext.bottomLeftCorner(6, 3).isZero(0));
  }
}

TEST_CASE("structure dimensions") {
  const auto g = GscStructure::make(2, 16, 128, ResponseSpec{ResponseKind::linear_phase, {}});
  CHECK(g.n_b() == 160);
  CHECK(g.n_f() == 16);
  CHECK(g.n_psi() == 144);
  CHECK(g.bf_size() == 32);
  CHECK(g.q_ext.head(128).isZero(0));
}

TEST_CASE("identity covariance gives the quiescent vector") {
  const auto g = GscStructure::make(2, 3, 4, ResponseSpec{});
  const auto s = optimal_solutions(MatrixXd::Identity(g.n_b(), g.n_b()), g);
  CHECK((s.a_opt - g.q_ext).norm() < 1e-12);
  CHECK(s.psi_opt.norm() < 1e-12);
  CHECK(s.J_min == doctest::Approx(g.q_ext.squaredNorm()));
}

TEST_CASE("small constrained minimizer matches KKT solve") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    // N_b = 4: N_AEC = 2, M = 2, N_BF = 1, N_f = 1
    const auto g = GscStructure::make(2, 1, 2, ResponseSpec{});
    const MatrixXd R = oracle::random_spd(4, rng);
    const auto s = optimal_solutions(R, g);
    const VectorXd ref = oracle::kkt_minimizer(R, g.C_ext, g.f);
    CHECK((s.a_opt - ref).norm() < 1e-10 * ref.norm());
    CHECK(s.J_min == doctest::Approx(ref.dot(R * ref)).epsilon(1e-10));
  }
}

TEST_CASE("optimality and orthogonality on the verification configuration") {
  for (auto kind : {ResponseKind::linear_phase, ResponseKind::allpass}) {
    const auto f4 = fig4_setup(kind);
    const auto s = optimal_solutions(f4.R_bb, f4.gsc);
    const VectorXd cres = f4.gsc.C_ext.transpose() * s.a_opt - f4.gsc.f;
    CHECK(cres.norm() <= 1e-8 * f4.gsc.f.norm());
    const double orth = (f4.gsc.B_ext.transpose() * f4.R_bb * s.a_opt).norm();
    CHECK(orth <= 1e-8 * f4.R_bb.norm() * s.a_opt.norm());
    CHECK(output_power(f4.R_bb, f4.gsc, s.psi_opt) == doctest::Approx(s.J_min).epsilon(1e-8));
    CHECK((f4.gsc.direct_weights(s.psi_opt) - s.a_opt).norm() < 1e-8 * s.a_opt.norm());

    std::mt19937_64 rng(77);
    for (int t = 0; t < 100; ++t) {
      const VectorXd z = oracle::random_vector(f4.gsc.n_psi(), rng) * std::pow(10.0, t % 5 - 4);
      const VectorXd a = s.a_opt + f4.gsc.B_ext * z;
      CHECK((f4.gsc.C_ext.transpose() * a - f4.gsc.f).norm() < 1e-10);
      CHECK(a.dot(f4.R_bb * a) >= s.J_min * (1 - 1e-12));
    }
  }
}

TEST_CASE("any psi gives a feasible direct-form vector") {
  std::mt19937_64 rng(8);
  const auto g = GscStructure::make(3, 4, 5, ResponseSpec{ResponseKind::linear_phase, {}});
  for (int t = 0; t < 20; ++t) {
    const VectorXd psi = oracle::random_vector(g.n_psi(), rng) * 10;
    CHECK((g.C_ext.transpose() * g.direct_weights(psi) - g.f).norm() < 1e-12);
  }
}

TEST_CASE("ill-conditioned covariance is rejected") {
  const auto g = GscStructure::make(2, 1, 2, ResponseSpec{});
  MatrixXd R = MatrixXd::Identity(4, 4);
  R(3, 3) = 1e-14;
  CHECK_THROWS_AS(optimal_solutions(R, g), NumericalError);
  CHECK_THROWS_AS(optimal_solutions(MatrixXd::Identity(3, 3), g), ConfigError);
}
