// Serial reference vs OpenMP kernels: Monte Carlo ensemble and design search.

#include <CLI11.hpp>
#include <chrono>
#include <fmt/format.h>
#include <omp.h>

#include "gscaec/design_search.hpp"
#include "gscaec/harness.hpp"

using namespace gscaec;

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int main(int argc, char** argv) {
  CLI::App app{"Serial vs parallel timing of the Monte Carlo and design-search kernels"};
  int runs = 64;
  std::int64_t samples = 5000;
  app.add_option("--runs", runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
  app.add_option("--samples", samples, "samples per run")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fmt::print("threads available: {}\n", omp_get_max_threads());

  Scenario sc;
  sc.runs = runs;
  sc.samples = samples;
  sc.policy = PolicySpec::trace_budget(2.0 / 30.0);
  const auto ps = prepare(sc);

  LearningCurve serial, parallel;
  const double ts = seconds([&] { serial = run_ensemble_serial(ps, false); });
  const double tp = seconds([&] { parallel = run_ensemble(ps, false); });
  fmt::print("ensemble  {:4d} runs x {} samples: serial {:.3f} s, parallel {:.3f} s, speedup {:.2f}, "
             "identical {}\n",
             runs, sc.samples, ts, tp, ts / tp, serial.J_mc == parallel.J_mc ? "yes" : "no");

  DesignSpec spec;
  spec.at_n = 3000;
  spec.mics = {2, 4};
  spec.aec_taps = {64, 96, 128, 143};
  spec.budgets = default_budget_grid();
  spec.fractions = {0.1, 0.3, 0.5, 0.7, 0.9};
  Scenario base;
  DesignResult ds, dp;
  const double tds = seconds([&] { ds = design_search_serial(spec, base); });
  const double tdp = seconds([&] { dp = design_search(spec, base); });
  bool same = ds.points.size() == dp.points.size();
  for (std::size_t i = 0; same && i < ds.points.size(); ++i)
    same = ds.points[i].mics == dp.points[i].mics && ds.points[i].aec_taps == dp.points[i].aec_taps &&
           ds.points[i].mu_aec == dp.points[i].mu_aec;
  fmt::print("design    {:4d} grid points: serial {:.3f} s, parallel {:.3f} s, speedup {:.2f}, "
             "identical {}\n",
             ds.points.size(), tds, tdp, tds / tdp, same ? "yes" : "no");
  return 0;
}
