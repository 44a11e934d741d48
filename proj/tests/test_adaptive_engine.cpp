#include <doctest.h>

#include <cmath>

#include "gscaec/adaptive_engine.hpp"
#include "gscaec/analytic_model.hpp"
#include "gscaec/errors.hpp"
#include "gscaec/signal_model.hpp"
#include "oracles.hpp"

using namespace gscaec;

namespace {

struct Small {
  MatrixXd H;
  RegressorDims dims{2, 2, 5};
  GscStructure gsc;
  NearEndModel near{1e-2, {}};
  FarEndModel far = FarEndModel::ar1(-0.9);
  SecondOrderStats stats;
};

Small small_case() {
  Small s;
  PlantSpec ps;
  ps.mics = 2;
  ps.taps = 4;
  ps.oversample = 2;
  ps.seed = 4;
  s.H = gen_lem_plant(ps).H;
  s.gsc = GscStructure::make(2, 2, 5, ResponseSpec{ResponseKind::linear_phase, {}});
  s.stats = optimal_solutions(
      analytic_Rbb(s.far, build_modified_channel_matrix(s.H, 2), s.near, s.dims), s.gsc);
  return s;
}

}  // namespace

TEST_CASE("residual examples") {
  std::mt19937_64 rng(1);
  const auto g = GscStructure::make(2, 3, 4, ResponseSpec{});
  const VectorXd b = oracle::random_vector(g.n_b(), rng);
  CHECK(residual(b, VectorXd::Zero(g.n_psi()), g) == doctest::Approx(b.dot(g.q_ext)));
  CHECK(residual(VectorXd::Zero(g.n_b()), oracle::random_vector(g.n_psi(), rng), g) == 0.0);

  // split form: -u_hc^T h + x_w^T (q - B psi_b), with h = psi_hc and u_hc = -b_head
  const VectorXd psi = oracle::random_vector(g.n_psi(), rng);
  const VectorXd x = b.tail(g.bf_size());
  const double split = b.head(4).dot(psi.head(4)) + x.dot(g.q - g.B * psi.tail(g.n_psi() - 4));
  CHECK(residual(b, psi, g) == doctest::Approx(split).epsilon(1e-12));
  CHECK(residual(b, psi, g) == doctest::Approx(b.dot(g.q_ext - g.B_ext * psi)).epsilon(1e-12));
}

TEST_CASE("mean squared residual at the optimum equals J_min") {
  const auto s = small_case();
  RegressorStream stream(s.H, s.far, s.near, s.dims, 42);
  for (std::int64_t i = 0; i < warmup_length(4, s.dims); ++i) stream.next();
  double acc = 0;
  const int n = 400'000;
  for (int i = 0; i < n; ++i) {
    const double d = residual(stream.next(), s.stats.psi_opt, s.gsc);
    acc += d * d;
  }
  CHECK(acc / n == doctest::Approx(s.stats.J_min).epsilon(0.03));
}

TEST_CASE("zero steps leave the state unchanged") {
  std::mt19937_64 rng(2);
  const auto g = GscStructure::make(2, 3, 4, ResponseSpec{});
  auto st = AdaptiveState::zeros(g);
  st.psi = oracle::random_vector(g.n_psi(), rng);
  const VectorXd before = st.psi;
  const VectorXd b = oracle::random_vector(g.n_b(), rng);
  const double d = step_split(st, b, 0.0, 0.0, g);
  CHECK(st.psi == before);
  CHECK(d == residual(b, before, g));
  CHECK(d != 0.0);
}

TEST_CASE("split step matches a dense single-step oracle") {
  std::mt19937_64 rng(3);
  // n_psi = N_AEC + M N_BF - N_f = 1 + 4 - 2 = 3
  const auto g = GscStructure::make(2, 2, 1, ResponseSpec{});
  REQUIRE(g.n_psi() == 3);
  for (auto [ma, mb] : {std::pair{9.7778e-4, 6.4603e-4}, std::pair{0.1, 0.3}}) {
    auto st = AdaptiveState::zeros(g);
    st.psi = oracle::random_vector(3, rng);
    const VectorXd b = oracle::random_vector(g.n_b(), rng);
    MatrixXd M = MatrixXd::Zero(3, 3);
    M(0, 0) = ma;
    M(1, 1) = mb;
    M(2, 2) = mb;
    const VectorXd ref = oracle::dense_update(st.psi, b, M, g.B_ext, g.q_ext);
    step_split(st, b, ma, mb, g);
    CHECK((st.psi - ref).norm() < 1e-14 * (1 + ref.norm()));
  }
}

TEST_CASE("general step matches a dense oracle for a random SPD matrix") {
  std::mt19937_64 rng(4);
  const auto g = GscStructure::make(2, 2, 1, ResponseSpec{});
  const MatrixXd M = 0.05 * oracle::random_spd(3, rng);
  auto st = AdaptiveState::zeros(g);
  st.psi = oracle::random_vector(3, rng);
  const VectorXd b = oracle::random_vector(g.n_b(), rng);
  const VectorXd ref = oracle::dense_update(st.psi, b, M, g.B_ext, g.q_ext);
  const double d_pre = b.dot(g.q_ext - g.B_ext * st.psi);
  const double d = step_general(st, b, M, g);
  CHECK(d == doctest::Approx(d_pre).epsilon(1e-12));
  CHECK((st.psi - ref).norm() < 1e-13 * (1 + ref.norm()));
}

TEST_CASE("scalar and diagonal step matrices reproduce the split update bit for bit") {
  std::mt19937_64 rng(5);
  const auto g = GscStructure::make(2, 4, 6, ResponseSpec{ResponseKind::linear_phase, {}});
  for (auto [ma, mb] : {std::pair{0.01, 0.01}, std::pair{0.02, 0.005}}) {
    const MatrixXd M = diagonal_step_matrix(g, ma, mb);
    auto a = AdaptiveState::zeros(g), c = AdaptiveState::zeros(g);
    for (int n = 0; n < 10; ++n) {
      const VectorXd b = oracle::random_vector(g.n_b(), rng);
      const double d1 = step_split(a, b, ma, mb, g);
      const double d2 = step_general(c, b, M, g);
      CHECK(d1 == d2);
      CHECK(a.psi == c.psi);
    }
  }
}

TEST_CASE("split and general trajectories stay together over a long run") {
  const auto s = small_case();
  RegressorStream stream(s.H, s.far, s.near, s.dims, 8);
  const double ma = 0.3 / s.stats.trace_aec(5), mb = 0.2 / s.stats.trace_bf(5);
  const MatrixXd M = diagonal_step_matrix(s.gsc, ma, mb);
  auto a = AdaptiveState::zeros(s.gsc), c = AdaptiveState::zeros(s.gsc);
  double drift = 0;
  for (int n = 0; n < 10'000; ++n) {
    const VectorXd& b = stream.next();
    step_split(a, b, ma, mb, s.gsc);
    step_general(c, b, M, s.gsc);
    drift = std::max(drift, (a.psi - c.psi).norm() / std::max(1e-300, a.psi.norm()));
  }
  CHECK(drift <= 1e-12);
}

TEST_CASE("constraints hold after many updates of every mode") {
  const auto s = small_case();
  std::mt19937_64 rng(6);
  const MatrixXd dense = 0.02 * oracle::random_spd(s.gsc.n_psi(), rng) /
                         oracle::random_spd(s.gsc.n_psi(), rng).trace();
  std::vector<StepMode> modes{ScalarPair{0.01, 0.02},
                              FullMatrix{std::make_shared<const MatrixXd>(dense)},
                              FullMatrix{std::make_shared<const MatrixXd>(
                                  quasi_newton_matrix(s.stats.R_bloc, 0.02))}};
  for (const auto& mode : modes) {
    RegressorStream stream(s.H, s.far, s.near, s.dims, 9);
    auto st = AdaptiveState::zeros(s.gsc);
    for (int n = 0; n < 5000; ++n) step(st, stream.next(), mode, s.gsc);
    const VectorXd a = s.gsc.direct_weights(st.psi);
    CHECK((s.gsc.C_ext.transpose() * a - s.gsc.f).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("freezing the echo canceler keeps its weights bit-constant") {
  const auto s = small_case();
  RegressorStream stream(s.H, s.far, s.near, s.dims, 10);
  auto st = AdaptiveState::zeros(s.gsc);
  for (int n = 0; n < 500; ++n) step_split(st, stream.next(), 0.05, 0.05, s.gsc);
  const VectorXd hc = st.psi_hc();
  const VectorXd pb = st.psi_b();
  for (int n = 0; n < 500; ++n) step_split(st, stream.next(), 0.0, 0.05, s.gsc);
  CHECK(VectorXd(st.psi_hc()) == hc);
  CHECK(VectorXd(st.psi_b()) != pb);
}

TEST_CASE("step matrix validation") {
  MatrixXd ns(2, 2);
  ns << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(validate_step_matrix(ns), ConfigError);
  MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;
  CHECK_THROWS_AS(validate_step_matrix(indef), ConfigError);
  CHECK_NOTHROW(validate_step_matrix(MatrixXd::Identity(3, 3)));
}

TEST_CASE("quasi-Newton matrix") {
  MatrixXd R = MatrixXd::Zero(2, 2);
  R(0, 0) = 1;
  R(1, 1) = 4;
  const MatrixXd M = quasi_newton_matrix(R, 0.1);
  CHECK(M(0, 0) == doctest::Approx(0.1));
  CHECK(M(1, 1) == doctest::Approx(0.025));
  CHECK(std::abs(M(0, 1)) < 1e-15);
  const auto su = setup_model(R, M, 1.0);
  CHECK(su.lambda(0) == doctest::Approx(0.1));
  CHECK(su.lambda(1) == doctest::Approx(0.1));

  std::mt19937_64 rng(12);
  const MatrixXd R5 = oracle::random_spd(5, rng);
  const MatrixXd M5 = quasi_newton_matrix(R5, 0.05);
  const auto s5 = setup_model(R5, M5, 1.0);
  CHECK((s5.lambda.maxCoeff() - s5.lambda.minCoeff()) / 0.05 <= 1e-8);
  CHECK((s5.rho.maxCoeff() - s5.rho.minCoeff()) <= 1e-8);

  CHECK(quasi_newton_lambda(0.1, 1.1, 10) == doctest::Approx(0.2 * 0.1 / 1.1));
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(1, 1) = 1e-17;
  CHECK_THROWS_AS(quasi_newton_matrix(bad, 0.1), NumericalError);
}

TEST_CASE("step modes map to matrices") {
  const auto g = GscStructure::make(2, 2, 3, ResponseSpec{});
  const MatrixXd D = step_matrix(ScalarPair{0.1, 0.2}, g);
  CHECK(D == diagonal_step_matrix(g, 0.1, 0.2));
  CHECK(D.diagonal().head(3) == VectorXd::Constant(3, 0.1));
  CHECK(D.diagonal().tail(g.n_psi() - 3) == VectorXd::Constant(g.n_psi() - 3, 0.2));
}

TEST_CASE("piecewise step policy") {
  StepPolicy p(ScalarPair{1, 1});
  p.add(100, ScalarPair{0, 1});
  p.add(200, ScalarPair{2, 2});
  CHECK(std::get<ScalarPair>(p.at(0)).mu_aec == 1);
  CHECK(std::get<ScalarPair>(p.at(99)).mu_aec == 1);
  CHECK(std::get<ScalarPair>(p.at(100)).mu_aec == 0);
  CHECK(std::get<ScalarPair>(p.at(250)).mu_aec == 2);
  CHECK_THROWS_AS(p.add(150, ScalarPair{}), ConfigError);
}
