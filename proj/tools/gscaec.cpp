// Command-line front end: simulate, model, compare, stability, design-search, plant-gen.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <optional>

#include "gscaec/analytic_model.hpp"
#include "gscaec/config.hpp"
#include "gscaec/csv.hpp"
#include "gscaec/design_search.hpp"
#include "gscaec/errors.hpp"
#include "gscaec/harness.hpp"

namespace {

using namespace gscaec;

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kInfeasible = 3 };

struct Globals {
  std::string config;
  std::string out;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

RunConfig load(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.config.empty()) {
    cfg.design.budgets = default_budget_grid();
    cfg.design.fractions = default_fraction_grid();
    cfg.design.aec_taps = {cfg.scenario.gsc.aec_taps};
  }
  if (!g.out.empty()) cfg.output.dir = g.out;
  if (g.runs) {
    if (*g.runs < 1) throw ConfigError("--runs must be >= 1");
    cfg.scenario.runs = *g.runs;
  }
  if (g.seed) cfg.scenario.seed = *g.seed;
  if (g.threads) {
    if (*g.threads < 0) throw ConfigError("--threads must be >= 0");
    cfg.scenario.threads = *g.threads;
  }
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& what) {
  return (std::filesystem::path(cfg.output.dir) / (cfg.output.prefix + "_" + what)).string();
}

void report_divergence(const LearningCurve& c) {
  if (c.divergent > 0)
    fmt::print(stderr, "warning: {} of {} runs diverged and were left out of J_mc\n",
               c.divergent, c.divergent + c.runs);
}

int cmd_simulate(const Globals& g) {
  const auto cfg = load(g);
  const auto ps = prepare(cfg.scenario);
  const auto curve = run_ensemble(ps, false);
  report_divergence(curve);
  const auto path = out_path(cfg, "simulate.csv");
  write_curve_csv(curve, path);
  fmt::print("{} runs, {} samples -> {}\n", curve.runs, cfg.scenario.samples, path);
  return curve.runs == 0 ? kNumerical : kOk;
}

int cmd_model(const Globals& g) {
  const auto cfg = load(g);
  const auto ps = prepare(cfg.scenario);
  LearningCurve curve;
  curve.J_model = model_curve(ps);
  curve.J_mc.assign(curve.J_model.size(), std::numeric_limits<double>::quiet_NaN());
  curve.warmup = ps.warmup;
  for (std::size_t i = 1; i < ps.segments.size(); ++i) curve.boundaries.push_back(ps.segments[i].start);
  const auto path = out_path(cfg, "model.csv");
  write_curve_csv(curve, path);
  fmt::print("model curve ({} samples) -> {}\n", curve.J_model.size(), path);
  return kOk;
}

int cmd_compare(const Globals& g) {
  const auto cfg = load(g);
  const auto ps = prepare(cfg.scenario);
  const auto curve = run_ensemble(ps, true);
  report_divergence(curve);
  const auto path = out_path(cfg, "compare.csv");
  write_curve_csv(curve, path);
  if (curve.runs == 0) {
    fmt::print(stderr, "error: every run diverged; nothing to compare\n");
    return kNumerical;
  }
  const auto rep = compare(curve, cfg.scenario.smoothing);
  fmt::print("smoothed deviation (window {}): max {:.3f} dB, mean {:.3f} dB over {} samples\n",
             cfg.scenario.smoothing, rep.max_abs_db, rep.mean_abs_db, rep.compared);
  for (std::size_t i = 0; i < rep.segment_max_db.size(); ++i)
    fmt::print("  segment {}: max {:.3f} dB\n", i + 1, rep.segment_max_db[i]);
  if (rep.divergent_runs > 0)
    fmt::print("  {} divergent runs excluded from the comparison\n", rep.divergent_runs);
  fmt::print("curves -> {}\n", path);
  return kOk;
}

void print_report(const StabilityReport& r, const VectorXd& lambda, double J_min) {
  constexpr double bound = StabilityReport::kTraceBound;
  fmt::print("{}, tr={:.4g} {} {:.4f}\n", r.trace_stable ? "stable" : (r.trace_marginal ? "marginal" : "unstable"),
             r.trace, r.trace_stable ? "<" : (r.trace_marginal ? "=" : ">="), bound);
  fmt::print("  (a) max|eig(Phi)| = {:.6f} -> {}\n", r.max_abs_eig_phi,
             r.eig_stable ? "stable" : "unstable");
  fmt::print("  (b) 2 max(lambda) + tr = {:.6f} < 2 -> {} (margin {:.4g})\n", r.gershgorin_value,
             r.gershgorin_stable ? "satisfied" : "violated", 2.0 - r.gershgorin_value);
  fmt::print("  (c) tr = {:.6f} < {:.4f} -> {} (margin {:.4g})\n", r.trace, bound,
             r.trace_stable ? "satisfied" : (r.trace_marginal ? "marginal" : "violated"),
             bound - r.trace);
  if (r.split_value)
    fmt::print("  (d) mu_aec tr(R_u) + mu_bf tr(B^T R_xx B) = {:.6f} -> {}\n", *r.split_value,
               *r.split_stable ? "satisfied" : "violated");
  if (J_min > 0) {
    for (auto v : {JexVariant::exact, JexVariant::trace_approx, JexVariant::block,
                   JexVariant::simplified}) {
      try {
        fmt::print("  Jex[inf] {:<12} = {:.6g}\n", to_string(v), steady_state_jex(lambda, J_min, v));
      } catch (const NumericalError& e) {
        fmt::print("  Jex[inf] {:<12} undefined ({})\n", to_string(v), e.what());
      }
    }
  }
}

int cmd_stability(const Globals& g, const std::vector<double>& lambda) {
  if (!lambda.empty()) {
    VectorXd l(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) l(i) = lambda[i];
    const auto setup = setup_from_lambda(l, 1.0);
    print_report(stability_report(setup), l, 0.0);
    return kOk;
  }
  const auto cfg = load(g);
  const auto ps = prepare(cfg.scenario);
  for (std::size_t i = 0; i < ps.segments.size(); ++i) {
    const auto& st = ps.stats[i];
    fmt::print("segment {} [{}, {}): J_min = {:.4f} dB\n", i + 1, ps.segments[i].start,
               ps.segments[i].end, LearningCurve::to_db(st.stats.J_min));
    if (const auto* p = std::get_if<ScalarPair>(&st.mode); p && (p->mu_aec == 0 || p->mu_bf == 0)) {
      fmt::print("  one block is frozen; the report covers the full step matrix only when both adapt\n");
      if (p->mu_aec == 0 && p->mu_bf == 0) continue;
    }
    std::optional<SplitTrace> split;
    if (const auto* p = std::get_if<ScalarPair>(&st.mode))
      split = SplitTrace{p->mu_aec * st.trace_aec, p->mu_bf * st.trace_bf};
    try {
      const auto setup = setup_model(st.stats.R_bloc, st.step, st.stats.J_min);
      print_report(stability_report(setup, split), setup.lambda, st.stats.J_min);
    } catch (const NumericalError& e) {
      fmt::print("  no modal report: {}\n", e.what());
      if (split)
        fmt::print("  (d) split trace = {:.6f} -> {}\n", split->total(),
                   split->total() < StabilityReport::kTraceBound ? "satisfied" : "violated");
    }
  }
  return kOk;
}

int cmd_design(const Globals& g) {
  const auto cfg = load(g);
  const auto result = design_search(cfg.design, cfg.scenario);
  const auto path = out_path(cfg, "design.csv");
  write_text_file(path, format_design_csv(result));
  if (!result.feasible()) {
    fmt::print(stderr, "{}", result.infeasibility_report(cfg.design));
    fmt::print("grid -> {}\n", path);
    return kInfeasible;
  }
  const auto& best = result.points.front();
  fmt::print("best: M={} N_AEC={} mu_aec={:.5g} mu_bf={:.5g} J_inf={:.2f} dB J[{}]={:.2f} dB\n",
             best.mics, best.aec_taps, best.mu_aec, best.mu_bf, best.J_inf_db, result.at_n,
             best.J_at_n_db);
  fmt::print("ranked grid -> {}\n", path);
  return kOk;
}

int cmd_plant(const Globals& g) {
  const auto cfg = load(g);
  const MatrixXd H = gen_lem_plant(cfg.scenario.plant).H;
  std::vector<std::string> header;
  for (Eigen::Index m = 0; m < H.cols(); ++m) header.push_back(fmt::format("mic{}", m));
  const auto path = out_path(cfg, "plant.csv");
  write_matrix_csv(H, path, header);
  fmt::print("{} taps x {} mics -> {}\n", H.rows(), H.cols(), path);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beamformer-assisted echo canceler: simulation, stochastic model and design search"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "INI configuration file")->envname("GSCAEC_CONFIG");
  app.add_option("--out", g.out, "output directory (overrides [output] dir)")->envname("GSCAEC_OUT");
  app.add_option("--runs", g.runs, "Monte Carlo runs")->envname("GSCAEC_RUNS");
  app.add_option("--seed", g.seed, "base seed")->envname("GSCAEC_SEED");
  app.add_option("--threads", g.threads, "worker threads, 0 = all")->envname("GSCAEC_THREADS");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo learning curve");
  auto* model = app.add_subcommand("model", "analytic learning curve");
  auto* cmp = app.add_subcommand("compare", "Monte Carlo and model curves with deviation report");
  auto* stab = app.add_subcommand("stability", "stability verdicts");
  std::vector<double> lambda;
  stab->add_option("--lambda", lambda, "synthetic modal eigenvalues, e.g. 0.1,0.2")->delimiter(',');
  auto* design = app.add_subcommand("design-search", "rank (M, N_AEC, step) configurations");
  auto* plant = app.add_subcommand("plant-gen", "dump the generated plant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(g);
    if (model->parsed()) return cmd_model(g);
    if (cmp->parsed()) return cmd_compare(g);
    if (stab->parsed()) return cmd_stability(g, lambda);
    if (design->parsed()) return cmd_design(g);
    if (plant->parsed()) return cmd_plant(g);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kNumerical;
  }
  return kConfig;
}
