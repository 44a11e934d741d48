#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gscaec/adaptive_engine.hpp"
#include "gscaec/gsc_core.hpp"
#include "gscaec/signal_model.hpp"

namespace gscaec {

struct GscSpec {
  int bf_taps = 16;
  int aec_taps = 128;
  ResponseSpec response{ResponseKind::linear_phase, {}};

  bool operator==(const GscSpec&) const = default;
};

enum class PolicyMode { pair, budget, quasi_newton, matrix };

/// Step policy as configured; resolved against each segment's statistics.
struct PolicySpec {
  PolicyMode mode = PolicyMode::budget;
  double mu_aec = 0;
  double mu_bf = 0;
  double budget = 2.0 / 30.0;          // target tr(M R_bloc)
  std::optional<double> aec_fraction;  // share of the budget given to the AEC
  double lambda = 0;                   // quasi-Newton
  std::string matrix_path;             // CSV, n_psi x n_psi
  std::int64_t refresh_every = 0;      // quasi-Newton re-estimation period, 0 = never
  std::shared_ptr<const MatrixXd> matrix;  // loaded from matrix_path or set directly

  static PolicySpec pair(double mu_aec, double mu_bf);
  static PolicySpec trace_budget(double budget, std::optional<double> aec_fraction = {});
  static PolicySpec quasi_newton(double lambda, std::int64_t refresh_every = 0);
  static PolicySpec full(std::shared_ptr<const MatrixXd> matrix);

  bool operator==(const PolicySpec& o) const;
};

enum class EventKind { dtalk_on, dtalk_off, plant_change, policy_change };

struct Event {
  std::int64_t at = 0;
  EventKind kind = EventKind::policy_change;
  Interferer interferer;              // dtalk_on
  std::uint64_t plant_seed = 0;       // plant_change
  std::optional<PolicySpec> policy;   // required for policy_change, optional otherwise

  bool operator==(const Event&) const = default;
};

struct Scenario {
  PlantSpec plant;
  bool plant_per_run = false;
  FarEndModel far_end;
  double noise_var = 1e-2;
  std::vector<int> steer_delays;  // empty = broadside
  GscSpec gsc;
  PolicySpec policy;
  std::vector<Event> events;

  std::int64_t samples = 20000;
  int runs = 300;
  std::uint64_t seed = 1;
  bool prefill = true;
  int smoothing = 101;
  int threads = 0;  // 0 = OpenMP default
};

/// Stationary stretch [start, end) of a scenario.
struct Segment {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::uint64_t plant_seed = 0;
  NearEndModel near_end;
  PolicySpec policy;
};

/// Checks the scenario and splits it at its events.
std::vector<Segment> build_segments(const Scenario& sc);

/// Effective (steered) plant for a seed.
MatrixXd scenario_plant(const Scenario& sc, std::uint64_t plant_seed);

struct SegmentStats {
  SecondOrderStats stats;
  StepMode mode;
  MatrixXd step;  // dense equivalent of mode
  double trace_aec = 0;  // tr(R_u)
  double trace_bf = 0;   // tr(B^T R_xx B)
};

/// Everything shared by the runs of one scenario.
struct PreparedScenario {
  Scenario scenario;
  RegressorDims dims;
  GscStructure gsc;
  std::vector<Segment> segments;
  std::vector<SegmentStats> stats;
  std::int64_t warmup = 0;
  bool has_stats = true;
};

/// With `with_stats` false the second-order statistics are skipped; only
/// pair and matrix policies are allowed and no model curve can be formed.
PreparedScenario prepare(const Scenario& sc, bool with_stats = true);

/// Resolves a policy against one segment's statistics.
StepMode resolve_policy(const PolicySpec& policy, const SecondOrderStats& stats,
                        const GscStructure& gsc);

struct LearningCurve {
  std::vector<double> J_mc;     // NaN when no run contributed
  std::vector<double> J_model;  // NaN when not evaluated
  std::int64_t warmup = 0;
  std::vector<std::int64_t> boundaries;  // segment starts after the first
  int runs = 0;
  int divergent = 0;

  std::size_t size() const { return std::max(J_mc.size(), J_model.size()); }
  /// Leading warm-up samples and the same span after every boundary.
  bool flagged(std::int64_t n) const;
  static double to_db(double power);
};

/// Analytic curve only (piecewise-stationary moment propagation).
std::vector<double> model_curve(const PreparedScenario& ps);

struct RunResult {
  std::vector<double> d2;
  bool divergent = false;
  std::int64_t diverged_at = -1;
};

/// Observer called after every update of one run.
using RunObserver = std::function<void(std::int64_t n, const AdaptiveState& state, double d)>;

RunResult run_single(const PreparedScenario& ps, int run_index,
                     const RunObserver& observer = {});

/// Monte Carlo ensemble with the model curve attached. Runs execute in
/// parallel; results are reduced in run order so the output does not depend
/// on the thread count.
LearningCurve run_ensemble(const Scenario& sc);
LearningCurve run_ensemble(const PreparedScenario& ps, bool with_model = true);

/// Single-threaded reference with the same reduction order.
LearningCurve run_ensemble_serial(const PreparedScenario& ps, bool with_model = true);

struct DeviationReport {
  double max_abs_db = 0;
  double mean_abs_db = 0;
  std::int64_t compared = 0;
  int divergent_runs = 0;
  std::vector<double> segment_max_db;  // per stationary segment
};

/// Centered moving average over `window` samples that does not cross
/// boundaries; the window shrinks near segment edges.
std::vector<double> smooth_curve(const std::vector<double>& x, int window,
                                 const std::vector<std::int64_t>& boundaries);

/// |J_mc_dB - J_model_dB| over unflagged samples, J_mc smoothed first.
DeviationReport compare(const LearningCurve& curve, int window = 101);

}  // namespace gscaec
