#include "gscaec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <omp.h>

#include "gscaec/analytic_model.hpp"
#include "gscaec/errors.hpp"
#include "gscaec/linalg.hpp"
#include "gscaec/rng.hpp"

namespace gscaec {
namespace {

constexpr double kDivergence = 1e6;
constexpr std::uint64_t kEstimationSalt = 0x9e3779b97f4a7c15ULL;

bool same_matrix(const std::shared_ptr<const MatrixXd>& a, const std::shared_ptr<const MatrixXd>& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return a->rows() == b->rows() && a->cols() == b->cols() && *a == *b;
}

MatrixXd estimate_Rbb(const Scenario& sc, const MatrixXd& H, const NearEndModel& near,
                      const RegressorDims& dims, std::size_t segment) {
  RegressorStream stream(H, sc.far_end, near, dims, mix_seed(sc.seed ^ kEstimationSalt, segment));
  const auto warm = warmup_length(static_cast<int>(H.rows()), dims);
  for (std::int64_t i = 0; i < warm; ++i) stream.next();
  const std::int64_t n = std::max<std::int64_t>(50000, 200 * static_cast<std::int64_t>(dims.size()));
  return sample_Rbb(stream, n);
}

class RefreshingStep {
 public:
  RefreshingStep(double lambda, std::int64_t period, int n_psi)
      : lambda_(lambda), period_(period), acc_(MatrixXd::Zero(n_psi, n_psi)) {}

  // Accumulates g g^T and returns a new step matrix when one is due.
  std::shared_ptr<const MatrixXd> observe(const VectorXd& b, const GscStructure& gsc) {
    VectorXd g(gsc.n_psi());
    g.head(gsc.aec_taps) = -b.head(gsc.aec_taps);
    g.tail(gsc.B.cols()).noalias() = gsc.B.transpose() * b.tail(gsc.bf_size());
    acc_.selfadjointView<Eigen::Lower>().rankUpdate(g);
    ++count_;
    if (count_ % period_ != 0 || count_ < 2 * acc_.rows()) return nullptr;
    MatrixXd R = acc_.selfadjointView<Eigen::Lower>();
    R /= static_cast<double>(count_);
    Eigen::LLT<MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) return nullptr;
    MatrixXd inv = llt.solve(MatrixXd::Identity(R.rows(), R.cols()));
    return std::make_shared<const MatrixXd>(linalg::symmetrize(lambda_ * inv));
  }

 private:
  double lambda_;
  std::int64_t period_;
  MatrixXd acc_;
  std::int64_t count_ = 0;
};

}  // namespace

PolicySpec PolicySpec::pair(double mu_aec, double mu_bf) {
  PolicySpec p;
  p.mode = PolicyMode::pair;
  p.mu_aec = mu_aec;
  p.mu_bf = mu_bf;
  return p;
}

PolicySpec PolicySpec::trace_budget(double budget, std::optional<double> aec_fraction) {
  PolicySpec p;
  p.mode = PolicyMode::budget;
  p.budget = budget;
  p.aec_fraction = aec_fraction;
  return p;
}

PolicySpec PolicySpec::quasi_newton(double lambda, std::int64_t refresh_every) {
  PolicySpec p;
  p.mode = PolicyMode::quasi_newton;
  p.lambda = lambda;
  p.refresh_every = refresh_every;
  return p;
}

PolicySpec PolicySpec::full(std::shared_ptr<const MatrixXd> matrix) {
  PolicySpec p;
  p.mode = PolicyMode::matrix;
  p.matrix = std::move(matrix);
  return p;
}

bool PolicySpec::operator==(const PolicySpec& o) const {
  if (mode != o.mode) return false;
  switch (mode) {
    case PolicyMode::pair: return mu_aec == o.mu_aec && mu_bf == o.mu_bf;
    case PolicyMode::budget: return budget == o.budget && aec_fraction == o.aec_fraction;
    case PolicyMode::quasi_newton: return lambda == o.lambda && refresh_every == o.refresh_every;
    case PolicyMode::matrix:
      return matrix_path == o.matrix_path && (!matrix_path.empty() || same_matrix(matrix, o.matrix));
  }
  return false;
}

std::vector<Segment> build_segments(const Scenario& sc) {
  if (sc.runs < 1) throw ConfigError("runs must be >= 1");
  if (sc.samples < 1) throw ConfigError("samples must be >= 1");
  if (sc.noise_var < 0) throw ConfigError("noise variance must be non-negative");
  if (sc.smoothing < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<Segment> segs;
  Segment cur;
  cur.start = 0;
  cur.plant_seed = sc.plant.seed;
  cur.near_end.noise_var = sc.noise_var;
  cur.policy = sc.policy;
  std::int64_t last = 0;
  for (const auto& ev : sc.events) {
    if (ev.at <= last)
      throw ConfigError(fmt::format("event at {} does not follow the previous event at {}", ev.at,
                                    last));
    if (ev.at >= sc.samples)
      throw ConfigError(fmt::format("event at {} lies beyond the {} simulated samples", ev.at,
                                    sc.samples));
    last = ev.at;
    cur.end = ev.at;
    segs.push_back(cur);
    cur.start = ev.at;
    switch (ev.kind) {
      case EventKind::dtalk_on:
        if (static_cast<int>(ev.interferer.delays.size()) != sc.plant.mics)
          throw ConfigError(fmt::format("double-talk event at {} needs {} arrival delays", ev.at,
                                        sc.plant.mics));
        cur.near_end.interferer = ev.interferer;
        if (!sc.steer_delays.empty())
          for (int m = 0; m < sc.plant.mics; ++m)
            cur.near_end.interferer->delays[m] += sc.steer_delays[m];
        break;
      case EventKind::dtalk_off:
        cur.near_end.interferer.reset();
        break;
      case EventKind::plant_change:
        cur.plant_seed = ev.plant_seed;
        break;
      case EventKind::policy_change:
        if (!ev.policy)
          throw ConfigError(fmt::format("policy event at {} has no policy", ev.at));
        break;
    }
    if (ev.policy) cur.policy = *ev.policy;
  }
  cur.end = sc.samples;
  segs.push_back(cur);
  return segs;
}

MatrixXd scenario_plant(const Scenario& sc, std::uint64_t plant_seed) {
  PlantSpec spec = sc.plant;
  spec.seed = plant_seed;
  MatrixXd H = gen_lem_plant(spec).H;
  if (sc.steer_delays.empty()) return H;
  return steer_plant(H, sc.steer_delays);
}

StepMode resolve_policy(const PolicySpec& policy, const SecondOrderStats& stats,
                        const GscStructure& gsc) {
  const int na = gsc.aec_taps;
  switch (policy.mode) {
    case PolicyMode::pair:
      if (policy.mu_aec < 0 || policy.mu_bf < 0) throw ConfigError("step sizes must be >= 0");
      return ScalarPair{policy.mu_aec, policy.mu_bf};
    case PolicyMode::budget: {
      if (!(policy.budget >= 0)) throw ConfigError("trace budget must be >= 0");
      if (!policy.aec_fraction) {
        const double mu = policy.budget / stats.R_bloc.trace();
        return ScalarPair{mu, mu};
      }
      const double frac = *policy.aec_fraction;
      if (!(frac >= 0 && frac <= 1)) throw ConfigError("aec_fraction must lie in [0, 1]");
      const double tu = stats.trace_aec(na), tb = stats.trace_bf(na);
      return ScalarPair{tu > 0 ? frac * policy.budget / tu : 0.0,
                        tb > 0 ? (1 - frac) * policy.budget / tb : 0.0};
    }
    case PolicyMode::quasi_newton:
      return FullMatrix{
          std::make_shared<const MatrixXd>(quasi_newton_matrix(stats.R_bloc, policy.lambda))};
    case PolicyMode::matrix: {
      if (!policy.matrix) throw ConfigError("matrix policy has no step matrix loaded");
      const auto& M = *policy.matrix;
      if (M.rows() != gsc.n_psi() || M.cols() != gsc.n_psi())
        throw ConfigError(fmt::format("step matrix is {}x{}, expected {}x{}", M.rows(), M.cols(),
                                      gsc.n_psi(), gsc.n_psi()));
      validate_step_matrix(M);
      return FullMatrix{policy.matrix};
    }
  }
  throw ConfigError("unknown policy mode");
}

PreparedScenario prepare(const Scenario& sc, bool with_stats) {
  PreparedScenario ps;
  ps.has_stats = with_stats;
  ps.scenario = sc;
  ps.segments = build_segments(sc);
  const MatrixXd H0 = scenario_plant(sc, sc.plant.seed);
  ps.dims = RegressorDims{sc.plant.mics, sc.gsc.bf_taps, sc.gsc.aec_taps};
  if (sc.gsc.aec_taps > H0.rows() + sc.gsc.bf_taps - 1)
    throw ConfigError(fmt::format("N_AEC = {} exceeds N_h + N_BF - 1 = {}", sc.gsc.aec_taps,
                                  H0.rows() + sc.gsc.bf_taps - 1));
  ps.gsc = GscStructure::make(sc.plant.mics, sc.gsc.bf_taps, sc.gsc.aec_taps, sc.gsc.response);
  ps.warmup = warmup_length(static_cast<int>(H0.rows()), ps.dims);
  for (std::size_t i = 0; i < ps.segments.size(); ++i) {
    const auto& seg = ps.segments[i];
    SegmentStats st;
    if (!with_stats) {
      if (seg.policy.mode != PolicyMode::pair && seg.policy.mode != PolicyMode::matrix)
        throw ConfigError("this policy needs second-order statistics");
      st.mode = resolve_policy(seg.policy, st.stats, ps.gsc);
      st.step = step_matrix(st.mode, ps.gsc);
      ps.stats.push_back(std::move(st));
      continue;
    }
    const MatrixXd H = seg.plant_seed == sc.plant.seed ? H0 : scenario_plant(sc, seg.plant_seed);
    MatrixXd R_bb;
    if (sc.far_end.has_closed_form())
      R_bb = analytic_Rbb(sc.far_end, build_modified_channel_matrix(H, sc.gsc.bf_taps),
                          seg.near_end, ps.dims);
    else
      R_bb = estimate_Rbb(sc, H, seg.near_end, ps.dims, i);
    st.stats = optimal_solutions(R_bb, ps.gsc);
    st.mode = resolve_policy(seg.policy, st.stats, ps.gsc);
    st.step = step_matrix(st.mode, ps.gsc);
    st.trace_aec = st.stats.trace_aec(ps.gsc.aec_taps);
    st.trace_bf = st.stats.trace_bf(ps.gsc.aec_taps);
    ps.stats.push_back(std::move(st));
  }
  return ps;
}

bool LearningCurve::flagged(std::int64_t n) const {
  if (n < warmup) return true;
  for (auto b : boundaries)
    if (n >= b && n < b + warmup) return true;
  return false;
}

double LearningCurve::to_db(double power) { return 10.0 * std::log10(power); }

std::vector<double> model_curve(const PreparedScenario& ps) {
  if (!ps.has_stats) throw ConfigError("model curve needs second-order statistics");
  const int np = ps.gsc.n_psi();
  std::vector<double> J;
  J.reserve(static_cast<std::size_t>(ps.scenario.samples));
  // weight moments in psi coordinates, psi[0] = 0
  VectorXd m = VectorXd::Zero(np);
  MatrixXd S = MatrixXd::Zero(np, np);
  for (std::size_t i = 0; i < ps.segments.size(); ++i) {
    const auto& seg = ps.segments[i];
    const auto& st = ps.stats[i];
    const VectorXd& po = st.stats.psi_opt;
    ErrorMoments th;
    th.mean = m - po;
    th.second = S - m * po.transpose() - po * m.transpose() + po * po.transpose();
    th = propagate_segment(st.stats.R_bloc, st.step, st.stats.J_min, th, seg.end - seg.start, &J);
    m = th.mean + po;
    S = th.second + th.mean * po.transpose() + po * th.mean.transpose() + po * po.transpose();
  }
  return J;
}

RunResult run_single(const PreparedScenario& ps, int run_index, const RunObserver& observer) {
  const auto& sc = ps.scenario;
  const std::uint64_t seed = sc.seed + static_cast<std::uint64_t>(run_index);
  const std::uint64_t plant_offset = sc.plant_per_run ? static_cast<std::uint64_t>(run_index) : 0;
  auto plant_for = [&](const Segment& seg) { return scenario_plant(sc, seg.plant_seed + plant_offset); };

  RunResult res;
  res.d2.assign(static_cast<std::size_t>(sc.samples), 0.0);
  std::uint64_t cur_seed = ps.segments.front().plant_seed;
  RegressorStream stream(plant_for(ps.segments.front()), sc.far_end, ps.segments.front().near_end,
                         ps.dims, seed);
  if (sc.prefill)
    for (std::int64_t i = 0; i < ps.warmup; ++i) stream.next();
  auto state = AdaptiveState::zeros(ps.gsc);

  for (std::size_t s = 0; s < ps.segments.size(); ++s) {
    const auto& seg = ps.segments[s];
    if (s > 0) {
      const auto& prev = ps.segments[s - 1];
      if (seg.plant_seed != cur_seed) {
        stream.set_plant(plant_for(seg));
        cur_seed = seg.plant_seed;
      }
      if (seg.near_end.interferer != prev.near_end.interferer) stream.set_near_end(seg.near_end);
    }
    StepMode mode = ps.stats[s].mode;
    std::optional<RefreshingStep> refresh;
    if (seg.policy.mode == PolicyMode::quasi_newton && seg.policy.refresh_every > 0)
      refresh.emplace(seg.policy.lambda, seg.policy.refresh_every, ps.gsc.n_psi());

    for (std::int64_t n = seg.start; n < seg.end; ++n) {
      const VectorXd& b = stream.next();
      const double d = step(state, b, mode, ps.gsc);
      if (!std::isfinite(d) || std::abs(d) > kDivergence) {
        res.divergent = true;
        res.diverged_at = n;
        return res;
      }
      res.d2[static_cast<std::size_t>(n)] = d * d;
      if (refresh)
        if (auto M = refresh->observe(b, ps.gsc)) mode = FullMatrix{std::move(M)};
      if (observer) observer(n, state, d);
    }
  }
  return res;
}

namespace {

LearningCurve finish_curve(const PreparedScenario& ps, std::vector<double>&& acc, int used,
                           int divergent, bool with_model) {
  LearningCurve c;
  c.runs = used;
  c.divergent = divergent;
  c.warmup = ps.warmup;
  for (std::size_t i = 1; i < ps.segments.size(); ++i) c.boundaries.push_back(ps.segments[i].start);
  if (used > 0) {
    for (auto& v : acc) v /= used;
    c.J_mc = std::move(acc);
  } else {
    c.J_mc.assign(static_cast<std::size_t>(ps.scenario.samples),
                  std::numeric_limits<double>::quiet_NaN());
  }
  if (with_model)
    c.J_model = model_curve(ps);
  else
    c.J_model.assign(c.J_mc.size(), std::numeric_limits<double>::quiet_NaN());
  return c;
}

void accumulate(std::vector<double>& acc, const RunResult& r, int& used, int& divergent) {
  if (r.divergent) {
    ++divergent;
    return;
  }
  ++used;
  for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += r.d2[n];
}

}  // namespace

LearningCurve run_ensemble(const Scenario& sc) { return run_ensemble(prepare(sc)); }

LearningCurve run_ensemble(const PreparedScenario& ps, bool with_model) {
  const auto& sc = ps.scenario;
  const int threads = sc.threads > 0 ? sc.threads : omp_get_max_threads();
  const int batch = std::max(4 * threads, 8);
  std::vector<double> acc(static_cast<std::size_t>(sc.samples), 0.0);
  int used = 0, divergent = 0;
  std::vector<RunResult> results(static_cast<std::size_t>(batch));
  for (int first = 0; first < sc.runs; first += batch) {
    const int count = std::min(batch, sc.runs - first);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int k = 0; k < count; ++k) {
      try {
        results[k] = run_single(ps, first + k);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    for (int k = 0; k < count; ++k) accumulate(acc, results[k], used, divergent);
  }
  return finish_curve(ps, std::move(acc), used, divergent, with_model);
}

LearningCurve run_ensemble_serial(const PreparedScenario& ps, bool with_model) {
  const auto& sc = ps.scenario;
  std::vector<double> acc(static_cast<std::size_t>(sc.samples), 0.0);
  int used = 0, divergent = 0;
  for (int r = 0; r < sc.runs; ++r) accumulate(acc, run_single(ps, r), used, divergent);
  return finish_curve(ps, std::move(acc), used, divergent, with_model);
}

std::vector<double> smooth_curve(const std::vector<double>& x, int window,
                                 const std::vector<std::int64_t>& boundaries) {
  if (window <= 1) return x;
  const auto N = static_cast<std::int64_t>(x.size());
  const std::int64_t half = window / 2;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::int64_t i = 0; i < N; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<std::int64_t> edges{0};
  for (auto b : boundaries)
    if (b > edges.back() && b < N) edges.push_back(b);
  edges.push_back(N);
  std::vector<double> out(x.size());
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const std::int64_t lo = edges[s], hi = edges[s + 1];
    for (std::int64_t n = lo; n < hi; ++n) {
      const std::int64_t a = std::max(lo, n - half), b = std::min(hi, n + half + 1);
      out[n] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
    }
  }
  return out;
}

DeviationReport compare(const LearningCurve& curve, int window) {
  if (curve.J_mc.size() != curve.J_model.size())
    throw ConfigError("comparison needs both Monte Carlo and model curves");
  DeviationReport rep;
  rep.divergent_runs = curve.divergent;
  const auto smooth = smooth_curve(curve.J_mc, window, curve.boundaries);
  std::vector<std::int64_t> starts{0};
  starts.insert(starts.end(), curve.boundaries.begin(), curve.boundaries.end());
  rep.segment_max_db.assign(starts.size(), 0.0);
  double sum = 0;
  std::size_t seg = 0;
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(smooth.size()); ++n) {
    while (seg + 1 < starts.size() && n >= starts[seg + 1]) ++seg;
    if (curve.flagged(n)) continue;
    const double dev = smooth[n] == curve.J_model[n]
                           ? 0.0
                           : std::abs(LearningCurve::to_db(smooth[n]) -
                                      LearningCurve::to_db(curve.J_model[n]));
    rep.max_abs_db = std::max(rep.max_abs_db, dev);
    rep.segment_max_db[seg] = std::max(rep.segment_max_db[seg], dev);
    sum += dev;
    ++rep.compared;
  }
  rep.mean_abs_db = rep.compared > 0 ? sum / static_cast<double>(rep.compared) : 0.0;
  return rep;
}

}  // namespace gscaec
