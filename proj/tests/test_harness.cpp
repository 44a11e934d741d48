#include <doctest.h>

#include <cmath>

#include "gscaec/errors.hpp"
#include "gscaec/harness.hpp"

using namespace gscaec;

namespace {

Scenario small_scenario() {
  Scenario sc;
  sc.plant.mics = 2;
  sc.plant.taps = 32;
  sc.plant.oversample = 4;
  sc.plant.t60 = 0.004;
  sc.plant.seed = 3;
  sc.far_end = FarEndModel::ar1(-0.9);
  sc.noise_var = 1e-2;
  sc.gsc.bf_taps = 4;
  sc.gsc.aec_taps = 20;
  sc.policy = PolicySpec::trace_budget(0.1, 0.5);
  sc.samples = 3000;
  sc.runs = 20;
  sc.seed = 5;
  sc.smoothing = 51;
  return sc;
}

double mean_over(const std::vector<double>& x, std::size_t a, std::size_t b) {
  double s = 0;
  for (std::size_t i = a; i < b; ++i) s += x[i];
  return s / static_cast<double>(b - a);
}

}  // namespace

TEST_CASE("silent input gives a zero learning curve") {
  Scenario sc = small_scenario();
  sc.far_end = FarEndModel::white(0.0);
  sc.noise_var = 0;
  sc.policy = PolicySpec::pair(0.01, 0.01);
  sc.runs = 1;
  const auto ps = prepare(sc, false);
  const auto c = run_ensemble(ps, false);
  REQUIRE(c.J_mc.size() == static_cast<std::size_t>(sc.samples));
  for (double v : c.J_mc) CHECK(v == 0.0);
  CHECK_THROWS_AS(model_curve(ps), ConfigError);
  sc.policy = PolicySpec::trace_budget(0.1);
  CHECK_THROWS_AS(prepare(sc, false), ConfigError);
}

TEST_CASE("curves are reproducible and independent of the thread count") {
  Scenario sc = small_scenario();
  const auto ps = prepare(sc);
  const auto a = run_ensemble(ps);
  const auto b = run_ensemble(ps);
  const auto s = run_ensemble_serial(ps);
  CHECK(a.J_mc == b.J_mc);
  CHECK(a.J_mc == s.J_mc);
  CHECK(a.J_model == s.J_model);
  sc.threads = 1;
  const auto one = run_ensemble(prepare(sc));
  CHECK(one.J_mc == a.J_mc);
  CHECK(a.J_mc.size() == static_cast<std::size_t>(sc.samples));
  CHECK(a.J_model.size() == static_cast<std::size_t>(sc.samples));
  for (double v : a.J_mc) CHECK(v >= 0.0);
  CHECK(a.runs == 20);
  CHECK(a.divergent == 0);
  CHECK(a.warmup == 36);

  sc.seed = 6;
  CHECK(run_ensemble(prepare(sc)).J_mc != a.J_mc);
}

TEST_CASE("model tracks the ensemble on a small scenario") {
  Scenario sc = small_scenario();
  sc.runs = 200;
  const auto c = run_ensemble(sc);
  const auto rep = compare(c, sc.smoothing);
  CHECK(rep.compared == sc.samples - c.warmup);
  CHECK(rep.max_abs_db < 1.5);
  // the model settles well below the quiescent level
  CHECK(c.J_model.back() < 0.5 * c.J_model.front());
}

TEST_CASE("standard error shrinks with the square root of the run count") {
  Scenario sc = small_scenario();
  sc.runs = 300;
  const auto ps = prepare(sc);
  std::vector<std::vector<double>> d2;
  for (int r = 0; r < 300; ++r) d2.push_back(run_single(ps, r).d2);
  auto avg_se = [&](int runs) {
    double acc = 0;
    int cnt = 0;
    for (std::size_t n = 1000; n < 3000; n += 5) {
      double m = 0, q = 0;
      for (int r = 0; r < runs; ++r) m += d2[r][n];
      m /= runs;
      for (int r = 0; r < runs; ++r) q += (d2[r][n] - m) * (d2[r][n] - m);
      acc += std::sqrt(q / (runs - 1) / runs);
      ++cnt;
    }
    return acc / cnt;
  };
  const double ratio = avg_se(30) / avg_se(300);
  CHECK(ratio > 2.5);
  CHECK(ratio < 4.0);
}

TEST_CASE("triple the stable budget diverges") {
  Scenario sc = small_scenario();
  sc.policy = PolicySpec::trace_budget(2.0, 0.5);
  sc.samples = 10'000;
  sc.runs = 10;
  const auto c = run_ensemble(sc);
  CHECK(c.divergent > 0);
  CHECK(c.runs + c.divergent == 10);
  const auto ps = prepare(sc);
  CHECK(run_single(ps, 0).divergent);
  CHECK(run_single(ps, 0).diverged_at > 0);
}

TEST_CASE("a policy change to the same policy reproduces the plain run") {
  Scenario sc = small_scenario();
  const auto plain = run_ensemble(sc);
  sc.events.push_back(Event{1500, EventKind::policy_change, {}, 0, sc.policy});
  const auto sched = run_ensemble(sc);
  CHECK(sched.J_mc == plain.J_mc);
  REQUIRE(sched.boundaries.size() == 1);
  for (std::size_t n = 0; n < plain.J_model.size(); ++n)
    CHECK(std::abs(sched.J_model[n] - plain.J_model[n]) <= 1e-9 * plain.J_model[n]);
}

TEST_CASE("frozen echo canceler stays bit-constant through its segment") {
  Scenario sc = small_scenario();
  const double mu = 0.01;
  sc.policy = PolicySpec::pair(mu, mu);
  sc.events.push_back(Event{1000, EventKind::dtalk_on, Interferer{1.0, -0.9, {0, 1}}, 0,
                            PolicySpec::pair(0.0, mu)});
  sc.events.push_back(Event{2000, EventKind::dtalk_off, {}, 0, PolicySpec::pair(mu, mu)});
  const auto ps = prepare(sc);
  REQUIRE(ps.segments.size() == 3);
  VectorXd at_start, bf_start;
  bool constant = true, bf_moved = false, hc_moved_after = false;
  run_single(ps, 0, [&](std::int64_t n, const AdaptiveState& st, double) {
    if (n == 999) {
      at_start = st.psi_hc();
      bf_start = st.psi_b();
    } else if (n >= 1000 && n < 2000) {
      constant = constant && VectorXd(st.psi_hc()) == at_start;
      bf_moved = bf_moved || VectorXd(st.psi_b()) != bf_start;
    } else if (n >= 2000) {
      hc_moved_after = hc_moved_after || VectorXd(st.psi_hc()) != at_start;
    }
  });
  CHECK(constant);
  CHECK(bf_moved);
  CHECK(hc_moved_after);
}

TEST_CASE("schedules with double talk and a plant change") {
  Scenario sc = small_scenario();
  sc.samples = 8000;
  sc.runs = 60;
  sc.policy = PolicySpec::trace_budget(0.1, 0.5);
  sc.events.push_back(
      Event{2000, EventKind::dtalk_on, Interferer{0.5, -0.5, {0, 2}}, 0, PolicySpec::trace_budget(0.1, 0.0)});
  sc.events.push_back(Event{4000, EventKind::dtalk_off, {}, 0, PolicySpec::trace_budget(0.1, 0.5)});
  sc.events.push_back(Event{5000, EventKind::plant_change, {}, 99, std::nullopt});
  const auto ps = prepare(sc);
  REQUIRE(ps.segments.size() == 4);
  CHECK(ps.segments[1].near_end.interferer.has_value());
  CHECK(!ps.segments[2].near_end.interferer.has_value());
  CHECK(ps.segments[3].plant_seed == 99);
  CHECK(ps.stats[3].stats.J_min != ps.stats[2].stats.J_min);
  const auto c = run_ensemble(ps);
  CHECK(c.boundaries == std::vector<std::int64_t>{2000, 4000, 5000});
  const auto rep = compare(c, sc.smoothing);
  REQUIRE(rep.segment_max_db.size() == 4);
  for (double v : rep.segment_max_db) CHECK(v < 2.0);
  // re-convergence after the plant change
  CHECK(mean_over(c.J_mc, 7500, 8000) < 0.5 * mean_over(c.J_mc, 5050, 5150));
}

TEST_CASE("malformed schedules are rejected") {
  Scenario sc = small_scenario();
  sc.events.push_back(Event{100, EventKind::dtalk_off, {}, 0, {}});
  sc.events.push_back(Event{100, EventKind::dtalk_off, {}, 0, {}});
  CHECK_THROWS_AS(build_segments(sc), ConfigError);
  sc.events = {Event{5000, EventKind::dtalk_off, {}, 0, {}}};
  CHECK_THROWS_AS(build_segments(sc), ConfigError);
  sc.events = {Event{100, EventKind::policy_change, {}, 0, std::nullopt}};
  CHECK_THROWS_AS(build_segments(sc), ConfigError);
  sc.events = {Event{100, EventKind::dtalk_on, Interferer{1, -0.9, {0}}, 0, {}}};
  CHECK_THROWS_AS(build_segments(sc), ConfigError);
  sc.events.clear();
  sc.runs = 0;
  CHECK_THROWS_AS(build_segments(sc), ConfigError);
}

TEST_CASE("comparison of identical curves is exact") {
  LearningCurve c;
  c.J_mc = {1.0, 0.5, 0.25, 0.2, 0.1, 0.1};
  c.J_model = c.J_mc;
  c.warmup = 2;
  const auto r = compare(c, 1);
  CHECK(r.max_abs_db == 0.0);
  CHECK(r.mean_abs_db == 0.0);
  CHECK(r.compared == 4);
  CHECK(c.flagged(0));
  CHECK(c.flagged(1));
  CHECK(!c.flagged(2));
  c.J_mc.pop_back();
  CHECK_THROWS_AS(compare(c, 1), ConfigError);
}

TEST_CASE("divergent runs are reported by the comparison") {
  LearningCurve c;
  c.J_mc = {1.0, 1.0, 1.0};
  c.J_model = {1.0, 1.0, 2.0};
  c.divergent = 3;
  const auto r = compare(c, 1);
  CHECK(r.divergent_runs == 3);
  CHECK(r.max_abs_db == doctest::Approx(10 * std::log10(2.0)));
}

TEST_CASE("smoothing keeps constants and respects boundaries") {
  std::vector<double> x(100, 2.0);
  for (std::size_t i = 50; i < 100; ++i) x[i] = 5.0;
  const auto s = smooth_curve(x, 21, {50});
  CHECK(s == x);
  const auto t = smooth_curve(x, 21, {});
  CHECK(t[49] > 2.0);
  std::vector<double> ramp(11);
  for (int i = 0; i < 11; ++i) ramp[i] = i;
  const auto r = smooth_curve(ramp, 3, {});
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(r[5] == doctest::Approx(5.0));
  CHECK(r[10] == doctest::Approx(9.5));
}

TEST_CASE("per-run plants change the ensemble") {
  Scenario sc = small_scenario();
  const auto shared = run_ensemble(prepare(sc), false);
  sc.plant_per_run = true;
  const auto own = run_ensemble(prepare(sc), false);
  CHECK(own.J_mc != shared.J_mc);
  for (double v : own.J_mc) CHECK(std::isfinite(v));
}

TEST_CASE("nonstationary far end runs with estimated statistics") {
  Scenario sc = small_scenario();
  sc.far_end.eta = 0.01;
  sc.runs = 5;
  const auto c = run_ensemble(sc);
  for (double v : c.J_mc) CHECK(std::isfinite(v));
  for (double v : c.J_model) CHECK(std::isfinite(v));
}

TEST_CASE("quasi-Newton and matrix policies") {
  Scenario sc = small_scenario();
  sc.policy = PolicySpec::quasi_newton(0.002);
  const auto ps = prepare(sc);
  const MatrixXd& M = ps.stats[0].step;
  sc.policy = PolicySpec::full(std::make_shared<const MatrixXd>(M));
  const auto ps2 = prepare(sc);
  CHECK(run_ensemble(ps).J_mc == run_ensemble(ps2).J_mc);
  sc.policy = PolicySpec::quasi_newton(0.002, 500);
  const auto refreshed = run_ensemble(prepare(sc), false);
  for (double v : refreshed.J_mc) CHECK(std::isfinite(v));
  sc.policy = PolicySpec::full(std::make_shared<const MatrixXd>(MatrixXd::Identity(3, 3)));
  CHECK_THROWS_AS(prepare(sc), ConfigError);
}
