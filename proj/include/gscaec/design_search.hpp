#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gscaec/harness.hpp"

namespace gscaec {

struct DesignSpec {
  double target_jinf_db = -20.0;
  double max_j_db = -20.0;                 // transient target at at_n
  std::optional<std::int64_t> at_n;
  std::optional<double> at_seconds;        // converted with the plant rate
  std::vector<int> mics{2, 4};
  std::vector<int> aec_taps;
  std::vector<double> budgets;             // tr(M R_bloc) grid
  std::vector<double> fractions;           // AEC share of the budget

  bool operator==(const DesignSpec&) const = default;
};

/// 20 log-spaced points from 2/300 to 2/3.
std::vector<double> default_budget_grid();
/// 0.01, 0.03, ..., 0.99
std::vector<double> default_fraction_grid();

/// Evaluation instant in samples.
std::int64_t resolve_at_n(const DesignSpec& spec, double fs);

struct DesignPoint {
  int mics = 0;
  int aec_taps = 0;
  bool feasible = false;
  std::string reason;  // why the point was rejected
  double budget = 0;
  double fraction = 0;
  double mu_aec = 0;
  double mu_bf = 0;
  double J_min_db = 0;
  double J_inf_db = 0;
  double J_at_n_db = 0;
  // Fastest admissible whitened (quasi-Newton) design for the same point.
  double whitened_lambda = 0;
  double whitened_J_at_n_db = 0;
  bool whitened_feasible = false;
};

struct DesignResult {
  std::vector<DesignPoint> points;  // feasible first, ranked; then the rest
  std::int64_t at_n = 0;

  bool feasible() const { return !points.empty() && points.front().feasible; }
  /// Human-readable summary of why no configuration qualifies.
  std::string infeasibility_report(const DesignSpec& spec) const;
};

/// Model evaluation of one (M, N_AEC) grid point.
DesignPoint evaluate_design_point(const DesignSpec& spec, const Scenario& base, int mics,
                                  int aec_taps);

/// Grid points run in parallel; output order does not depend on threads.
DesignResult design_search(const DesignSpec& spec, const Scenario& base);
DesignResult design_search_serial(const DesignSpec& spec, const Scenario& base);

}  // namespace gscaec
