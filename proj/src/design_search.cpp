#include "gscaec/design_search.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <omp.h>

#include "gscaec/analytic_model.hpp"
#include "gscaec/errors.hpp"

namespace gscaec {
namespace {

constexpr double kTraceBound = 2.0 / 3.0;

double db(double p) { return 10.0 * std::log10(p); }

void check_spec(const DesignSpec& spec) {
  if (spec.mics.empty() || spec.aec_taps.empty())
    throw ConfigError("design grid needs at least one microphone count and one AEC length");
  if (spec.budgets.empty() || spec.fractions.empty())
    throw ConfigError("design grid needs non-empty budget and fraction grids");
  for (double f : spec.fractions)
    if (!(f > 0 && f < 1)) throw ConfigError(fmt::format("AEC fraction {} must lie in (0, 1)", f));
  for (double t : spec.budgets)
    if (!(t > 0)) throw ConfigError(fmt::format("trace budget {} must be positive", t));
}

// Scalar whitened recursion: all modal eigenvalues equal lambda.
double whitened_J(double lambda, int n, double J_min, double jex0, std::int64_t steps) {
  const double rho = (1 - lambda) * (1 - lambda) + lambda * lambda;
  double s = jex0 / lambda;
  for (std::int64_t k = 0; k < steps; ++k) s = (rho + n * lambda * lambda) * s + n * lambda * J_min;
  return J_min + lambda * s;
}

}  // namespace

std::vector<double> default_budget_grid() {
  constexpr int n = 20;
  const double lo = std::log(2.0 / 300.0), hi = std::log(2.0 / 3.0);
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = std::exp(lo + (hi - lo) * i / (n - 1));
  g.back() = 2.0 / 3.0;
  return g;
}

std::vector<double> default_fraction_grid() {
  std::vector<double> g;
  for (int i = 0; i < 50; ++i) g.push_back(0.01 + 0.02 * i);
  return g;
}

std::int64_t resolve_at_n(const DesignSpec& spec, double fs) {
  if (spec.at_n && spec.at_seconds)
    throw ConfigError("give either at_n or at_seconds, not both");
  if (spec.at_n) {
    if (*spec.at_n < 1) throw ConfigError("at_n must be >= 1");
    return *spec.at_n;
  }
  if (spec.at_seconds) {
    const auto n = static_cast<std::int64_t>(std::llround(*spec.at_seconds * fs));
    if (n < 1) throw ConfigError("at_seconds resolves to fewer than one sample");
    return n;
  }
  throw ConfigError("design spec needs at_n or at_seconds");
}

DesignPoint evaluate_design_point(const DesignSpec& spec, const Scenario& base, int mics,
                                  int aec_taps) {
  check_spec(spec);
  const std::int64_t at_n = resolve_at_n(spec, base.plant.fs);
  Scenario sc = base;
  sc.plant.mics = mics;
  sc.gsc.aec_taps = aec_taps;
  sc.events.clear();
  if (!sc.steer_delays.empty() && static_cast<int>(sc.steer_delays.size()) != mics)
    sc.steer_delays.assign(static_cast<std::size_t>(mics), 0);
  if (!sc.far_end.has_closed_form())
    throw ConfigError("design search needs a far-end model with closed-form statistics");

  DesignPoint pt;
  pt.mics = mics;
  pt.aec_taps = aec_taps;
  const MatrixXd H = scenario_plant(sc, sc.plant.seed);
  if (aec_taps > H.rows() + sc.gsc.bf_taps - 1) {
    pt.reason = "N_AEC exceeds N_h + N_BF - 1";
    pt.J_min_db = pt.J_inf_db = pt.J_at_n_db = std::numeric_limits<double>::quiet_NaN();
    return pt;
  }
  const RegressorDims dims{mics, sc.gsc.bf_taps, aec_taps};
  const auto gsc = GscStructure::make(mics, sc.gsc.bf_taps, aec_taps, sc.gsc.response);
  NearEndModel near;
  near.noise_var = sc.noise_var;
  const MatrixXd R_bb =
      analytic_Rbb(sc.far_end, build_modified_channel_matrix(H, sc.gsc.bf_taps), near, dims);
  const auto stats = optimal_solutions(R_bb, gsc);
  const double J_min = stats.J_min;
  const double tu = stats.trace_aec(aec_taps), tb = stats.trace_bf(aec_taps);
  const int N = gsc.n_psi();
  const double target = std::pow(10.0, spec.target_jinf_db / 10.0);
  const double max_j = std::pow(10.0, spec.max_j_db / 10.0);
  pt.J_min_db = db(J_min);
  pt.J_inf_db = pt.J_at_n_db = std::numeric_limits<double>::quiet_NaN();

  // Whitened reference: fastest lambda whose steady state meets the target.
  const double jex0 = stats.psi_opt.dot(stats.R_bloc * stats.psi_opt);
  if (target > J_min) {
    double lam = 2.0 * (target - J_min) / (N * target);
    lam = std::min(lam, kTraceBound / N * (1 - 1e-9));
    pt.whitened_lambda = lam;
    const double Jw = whitened_J(lam, N, J_min, jex0, at_n);
    pt.whitened_J_at_n_db = db(Jw);
    pt.whitened_feasible = Jw <= max_j;
  } else {
    pt.whitened_J_at_n_db = std::numeric_limits<double>::quiet_NaN();
  }

  if (J_min >= target) {
    pt.reason = fmt::format("J_min = {:.2f} dB is not below the steady-state target", db(J_min));
    return pt;
  }

  auto budgets = spec.budgets;
  std::sort(budgets.begin(), budgets.end());
  // Unit-budget setups per fraction; lambda scales with the budget and the
  // modal initial energies scale with its inverse.
  std::vector<std::optional<ModelSetup>> unit(spec.fractions.size());
  std::vector<VectorXd> nu_unit(spec.fractions.size());
  bool any_admissible = false;
  double best_transient = std::numeric_limits<double>::infinity();
  for (double t : budgets) {
    const double J_inf = J_min / (1.0 - 0.5 * t);
    if (J_inf > target) break;
    if (!(t < kTraceBound) || std::abs(t - kTraceBound) <= 1e-12) continue;
    DesignPoint best = pt;
    double best_J = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.fractions.size(); ++i) {
      const double f = spec.fractions[i];
      if (!unit[i]) {
        const MatrixXd M1 = diagonal_step_matrix(gsc, f / tu, (1 - f) / tb);
        unit[i] = setup_model(stats.R_bloc, M1, J_min);
        nu_unit[i] = initial_nu(*unit[i], stats.psi_opt);
      }
      ModelSetup s;
      s.J_min = J_min;
      s.lambda = t * unit[i]->lambda;
      s.rho = (1.0 - s.lambda.array()).square() + s.lambda.array().square();
      if (!(2.0 * s.lambda.maxCoeff() + s.lambda.sum() < 2.0)) continue;
      any_admissible = true;
      VectorXd nu = nu_unit[i] / t;
      for (std::int64_t k = 0; k < at_n; ++k) advance_nu(s, nu);
      const double J_at = J_min + s.lambda.dot(nu);
      best_transient = std::min(best_transient, J_at);
      if (J_at <= max_j && J_at < best_J) {
        best_J = J_at;
        best.budget = t;
        best.fraction = f;
        best.mu_aec = f * t / tu;
        best.mu_bf = (1 - f) * t / tb;
        best.J_inf_db = db(J_inf);
        best.J_at_n_db = db(J_at);
      }
    }
    if (std::isfinite(best_J)) {
      best.feasible = true;
      return best;
    }
  }
  if (!any_admissible)
    pt.reason = "no stable budget meets the steady-state target";
  else
    pt.reason = fmt::format("transient target missed (best {:.2f} dB at n = {})",
                            db(best_transient), at_n);
  return pt;
}

namespace {

DesignResult rank(std::vector<DesignPoint> pts, std::int64_t at_n) {
  std::stable_sort(pts.begin(), pts.end(), [](const DesignPoint& a, const DesignPoint& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (a.feasible && a.J_inf_db != b.J_inf_db) return a.J_inf_db < b.J_inf_db;
    return a.mics * a.aec_taps < b.mics * b.aec_taps;
  });
  return {std::move(pts), at_n};
}

std::vector<std::pair<int, int>> grid(const DesignSpec& spec) {
  std::vector<std::pair<int, int>> g;
  for (int m : spec.mics)
    for (int n : spec.aec_taps) g.emplace_back(m, n);
  return g;
}

}  // namespace

DesignResult design_search(const DesignSpec& spec, const Scenario& base) {
  check_spec(spec);
  const auto at_n = resolve_at_n(spec, base.plant.fs);
  const auto g = grid(spec);
  std::vector<DesignPoint> pts(g.size());
  const int threads = base.threads > 0 ? base.threads : omp_get_max_threads();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < g.size(); ++i) {
    try {
      pts[i] = evaluate_design_point(spec, base, g[i].first, g[i].second);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return rank(std::move(pts), at_n);
}

DesignResult design_search_serial(const DesignSpec& spec, const Scenario& base) {
  check_spec(spec);
  const auto at_n = resolve_at_n(spec, base.plant.fs);
  std::vector<DesignPoint> pts;
  for (auto [m, n] : grid(spec)) pts.push_back(evaluate_design_point(spec, base, m, n));
  return rank(std::move(pts), at_n);
}

std::string DesignResult::infeasibility_report(const DesignSpec& spec) const {
  std::string out = fmt::format(
      "no configuration reaches J_inf <= {:.2f} dB and J <= {:.2f} dB at n = {}\n",
      spec.target_jinf_db, spec.max_j_db, at_n);
  bool whitening_helps = false;
  for (const auto& p : points) {
    out += fmt::format("  M={} N_AEC={}: J_min {:.2f} dB; {}; whitened step reaches {:.2f} dB{}\n",
                       p.mics, p.aec_taps, p.J_min_db, p.reason, p.whitened_J_at_n_db,
                       p.whitened_feasible ? " (meets the transient target)" : "");
    whitening_helps = whitening_helps || p.whitened_feasible;
  }
  out += whitening_helps
             ? "a whitening step matrix meets the targets where the split steps do not\n"
             : "even a whitening step matrix cannot meet the targets; relax the specification\n";
  return out;
}

}  // namespace gscaec
