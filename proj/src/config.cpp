#include "gscaec/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <filesystem>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gscaec/csv.hpp"
#include "gscaec/errors.hpp"

namespace pt = boost::property_tree;

namespace gscaec {
namespace {

std::string g17(double v) { return fmt::format("{:.17g}", v); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> tokens(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

double to_double(const std::string& s, const std::string& key) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a decimal number", key, s));
  return v;
}

template <class Int>
Int to_int(const std::string& s, const std::string& key) {
  Int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, s));
  return v;
}

bool to_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, s));
}

std::vector<int> to_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  for (const auto& t : tokens(s, ',')) out.push_back(to_int<int>(t, key));
  return out;
}

std::vector<double> to_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& t : tokens(s, ',')) out.push_back(to_double(t, key));
  return out;
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

std::string join_doubles(const std::vector<double>& v) {
  std::vector<std::string> s;
  for (double x : v) s.push_back(g17(x));
  return fmt::format("{}", fmt::join(s, ","));
}

// Reads one section while tracking which keys were consumed.
class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {
    if (!tree_) return;
    for (const auto& [k, v] : *tree_) {
      if (!v.empty())
        throw ConfigError(fmt::format("[{}] key '{}' has nested content", name_, k));
      if (!seen_.insert(k).second)
        throw ConfigError(fmt::format("[{}] key '{}' appears twice", name_, k));
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }
  std::string where(const std::string& key) const { return fmt::format("[{}] {}", name_, key); }

  template <class T, class F>
  void get(const std::string& key, T& out, F conv) {
    if (auto v = raw(key)) out = conv(*v, where(key));
  }
  void get(const std::string& key, double& out) { get(key, out, to_double); }
  void get(const std::string& key, int& out) { get(key, out, to_int<int>); }
  void get(const std::string& key, std::int64_t& out) { get(key, out, to_int<std::int64_t>); }
  void get(const std::string& key, std::uint64_t& out) { get(key, out, to_int<std::uint64_t>); }
  void get(const std::string& key, bool& out) { get(key, out, to_bool); }
  void get(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }

  void finish() const {
    for (const auto& k : seen_)
      if (!used_.count(k)) throw ConfigError(fmt::format("unknown key '{}' in [{}]", k, name_));
  }
  const std::set<std::string>& keys() const { return seen_; }

 private:
  const pt::ptree* tree_;
  std::string name_;
  std::set<std::string> seen_;
  std::set<std::string> used_;
};

FarEndKind far_end_kind(const std::string& s, const std::string& key) {
  if (s == "ar1") return FarEndKind::ar1;
  if (s == "white") return FarEndKind::white;
  if (s == "file") return FarEndKind::file;
  throw ConfigError(fmt::format("{}: unknown far-end kind '{}' (ar1, white, file)", key, s));
}

std::string far_end_name(FarEndKind k) {
  switch (k) {
    case FarEndKind::ar1: return "ar1";
    case FarEndKind::white: return "white";
    case FarEndKind::file: return "file";
  }
  return "ar1";
}

ResponseKind response_kind(const std::string& s, const std::string& key) {
  if (s == "allpass") return ResponseKind::allpass;
  if (s == "linear_phase") return ResponseKind::linear_phase;
  if (s == "custom") return ResponseKind::custom;
  throw ConfigError(
      fmt::format("{}: unknown response '{}' (allpass, linear_phase, custom)", key, s));
}

std::string response_name(ResponseKind k) {
  switch (k) {
    case ResponseKind::allpass: return "allpass";
    case ResponseKind::linear_phase: return "linear_phase";
    case ResponseKind::custom: return "custom";
  }
  return "allpass";
}

PolicyMode policy_mode(const std::string& s, const std::string& key) {
  if (s == "pair") return PolicyMode::pair;
  if (s == "budget") return PolicyMode::budget;
  if (s == "quasi_newton") return PolicyMode::quasi_newton;
  if (s == "matrix") return PolicyMode::matrix;
  throw ConfigError(
      fmt::format("{}: unknown policy '{}' (pair, budget, quasi_newton, matrix)", key, s));
}

std::string policy_name(PolicyMode m) {
  switch (m) {
    case PolicyMode::pair: return "pair";
    case PolicyMode::budget: return "budget";
    case PolicyMode::quasi_newton: return "quasi_newton";
    case PolicyMode::matrix: return "matrix";
  }
  return "pair";
}

void load_matrix(PolicySpec& p) {
  if (p.mode != PolicyMode::matrix) return;
  if (p.matrix_path.empty()) throw ConfigError("matrix policy needs matrix_path");
  p.matrix = std::make_shared<const MatrixXd>(read_matrix_csv(p.matrix_path));
}

// "pair 1e-4 2e-4", "budget 0.0667 [0.5]", "quasi_newton 0.001 [refresh]", "matrix path"
PolicySpec parse_policy_tokens(const std::vector<std::string>& t, std::size_t i,
                               const std::string& where, const std::string& base_dir) {
  if (i >= t.size()) throw ConfigError(where + ": missing policy mode");
  PolicySpec p;
  p.mode = policy_mode(t[i], where);
  const std::size_t n = t.size() - i - 1;
  switch (p.mode) {
    case PolicyMode::pair:
      if (n != 2) throw ConfigError(where + ": 'pair' takes mu_aec mu_bf");
      p.mu_aec = to_double(t[i + 1], where);
      p.mu_bf = to_double(t[i + 2], where);
      break;
    case PolicyMode::budget:
      if (n < 1 || n > 2) throw ConfigError(where + ": 'budget' takes trace [aec_fraction]");
      p.budget = to_double(t[i + 1], where);
      if (n == 2) p.aec_fraction = to_double(t[i + 2], where);
      break;
    case PolicyMode::quasi_newton:
      if (n < 1 || n > 2) throw ConfigError(where + ": 'quasi_newton' takes lambda [refresh]");
      p.lambda = to_double(t[i + 1], where);
      if (n == 2) p.refresh_every = to_int<std::int64_t>(t[i + 2], where);
      break;
    case PolicyMode::matrix:
      if (n != 1) throw ConfigError(where + ": 'matrix' takes a path");
      p.matrix_path = resolve_path(t[i + 1], base_dir);
      load_matrix(p);
      break;
  }
  return p;
}

std::string format_policy(const PolicySpec& p) {
  switch (p.mode) {
    case PolicyMode::pair: return fmt::format("pair {} {}", g17(p.mu_aec), g17(p.mu_bf));
    case PolicyMode::budget:
      return p.aec_fraction ? fmt::format("budget {} {}", g17(p.budget), g17(*p.aec_fraction))
                            : fmt::format("budget {}", g17(p.budget));
    case PolicyMode::quasi_newton:
      return p.refresh_every ? fmt::format("quasi_newton {} {}", g17(p.lambda), p.refresh_every)
                             : fmt::format("quasi_newton {}", g17(p.lambda));
    case PolicyMode::matrix: return fmt::format("matrix {}", p.matrix_path);
  }
  return {};
}

const std::set<std::string> kSections{"plant", "signals", "gsc",    "policy",
                                      "schedule", "montecarlo", "design", "output"};

}  // namespace

bool operator==(const FarEndModel& a, const FarEndModel& b) {
  return a.kind == b.kind && a.a1 == b.a1 && a.variance == b.variance && a.path == b.path &&
         a.eta == b.eta;
}

bool operator==(const Scenario& a, const Scenario& b) {
  return a.plant == b.plant && a.plant_per_run == b.plant_per_run && a.far_end == b.far_end &&
         a.noise_var == b.noise_var && a.steer_delays == b.steer_delays && a.gsc == b.gsc &&
         a.policy == b.policy && a.events == b.events && a.samples == b.samples &&
         a.runs == b.runs && a.seed == b.seed && a.prefill == b.prefill &&
         a.smoothing == b.smoothing && a.threads == b.threads;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.scenario == b.scenario && a.design == b.design && a.output == b.output;
}

Event parse_event(const std::string& text, const std::string& base_dir) {
  const auto t = tokens(text, ' ');
  const std::string where = fmt::format("event '{}'", text);
  if (t.size() < 2) throw ConfigError(where + ": expected '<at> <kind> ...'");
  Event ev;
  ev.at = to_int<std::int64_t>(t[0], where);
  std::size_t next = 2;
  const auto& kind = t[1];
  if (kind == "dtalk_on") {
    if (t.size() < 5) throw ConfigError(where + ": dtalk_on takes power a1 delays");
    ev.kind = EventKind::dtalk_on;
    ev.interferer.power = to_double(t[2], where);
    ev.interferer.a1 = to_double(t[3], where);
    ev.interferer.delays = to_int_list(t[4], where);
    next = 5;
  } else if (kind == "dtalk_off") {
    ev.kind = EventKind::dtalk_off;
  } else if (kind == "plant_change") {
    if (t.size() < 3) throw ConfigError(where + ": plant_change takes a seed");
    ev.kind = EventKind::plant_change;
    ev.plant_seed = to_int<std::uint64_t>(t[2], where);
    next = 3;
  } else if (kind == "policy") {
    ev.kind = EventKind::policy_change;
    ev.policy = parse_policy_tokens(t, 2, where, base_dir);
    return ev;
  } else {
    throw ConfigError(fmt::format(
        "{}: unknown event '{}' (dtalk_on, dtalk_off, plant_change, policy)", where, kind));
  }
  if (next < t.size()) {
    if (t[next] != "policy")
      throw ConfigError(fmt::format("{}: unexpected token '{}'", where, t[next]));
    ev.policy = parse_policy_tokens(t, next + 1, where, base_dir);
  }
  return ev;
}

std::string format_event(const Event& ev) {
  std::string s = std::to_string(ev.at);
  switch (ev.kind) {
    case EventKind::dtalk_on: {
      std::vector<std::string> d;
      for (int x : ev.interferer.delays) d.push_back(std::to_string(x));
      s += fmt::format(" dtalk_on {} {} {}", g17(ev.interferer.power), g17(ev.interferer.a1),
                       fmt::join(d, ","));
      break;
    }
    case EventKind::dtalk_off: s += " dtalk_off"; break;
    case EventKind::plant_change: s += fmt::format(" plant_change {}", ev.plant_seed); break;
    case EventKind::policy_change: break;
  }
  if (ev.policy) s += " policy " + format_policy(*ev.policy);
  return s;
}

RunConfig parse_config_string(const std::string& text, const std::string& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    std::string line;
    std::istringstream lines(text);
    for (unsigned long i = 0; i < e.line() && std::getline(lines, line);) ++i;
    throw ConfigError(fmt::format("config syntax error at line {} ('{}'): {}", e.line(), line, e.message()));
  }
  for (const auto& [name, sub] : tree) {
    if (sub.empty())
      throw ConfigError(fmt::format("key '{}' appears outside any section", name));
    if (!kSections.count(name)) throw ConfigError(fmt::format("unknown section [{}]", name));
  }
  auto section = [&](const std::string& name) {
    auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  RunConfig cfg;
  Scenario& sc = cfg.scenario;

  {
    auto s = section("plant");
    s.get("mics", sc.plant.mics);
    s.get("taps", sc.plant.taps);
    s.get("fs", sc.plant.fs);
    s.get("t60", sc.plant.t60);
    s.get("oversample", sc.plant.oversample);
    s.get("mic_spacing", sc.plant.mic_spacing);
    s.get("seed", sc.plant.seed);
    s.get("per_run", sc.plant_per_run);
    s.finish();
  }
  {
    auto s = section("signals");
    std::string kind = "ar1";
    s.get("far_end", kind);
    sc.far_end.kind = far_end_kind(kind, s.where("far_end"));
    s.get("a1", sc.far_end.a1);
    s.get("variance", sc.far_end.variance);
    std::string path;
    s.get("path", path);
    s.get("eta", sc.far_end.eta);
    s.get("noise_var", sc.noise_var);
    if (auto v = s.raw("steer_delays")) sc.steer_delays = to_int_list(*v, s.where("steer_delays"));
    s.finish();
    if (sc.far_end.kind == FarEndKind::file) {
      if (path.empty()) throw ConfigError("[signals] far_end = file needs a path");
      const auto model = FarEndModel::file(resolve_path(path, base_dir));
      sc.far_end.path = model.path;
      sc.far_end.samples = model.samples;
    } else {
      sc.far_end.path = path.empty() ? path : resolve_path(path, base_dir);
    }
    if (sc.far_end.kind == FarEndKind::ar1 && !(std::abs(sc.far_end.a1) < 1))
      throw ConfigError("[signals] a1 must satisfy |a1| < 1");
    if (sc.far_end.eta < 0) throw ConfigError("[signals] eta must be non-negative");
    if (!sc.steer_delays.empty() && static_cast<int>(sc.steer_delays.size()) != sc.plant.mics)
      throw ConfigError("[signals] steer_delays needs one entry per microphone");
  }
  {
    auto s = section("gsc");
    s.get("bf_taps", sc.gsc.bf_taps);
    s.get("aec_taps", sc.gsc.aec_taps);
    std::string constraints = "tap_sum";
    s.get("constraints", constraints);
    if (constraints != "tap_sum")
      throw ConfigError(
          fmt::format("[gsc] constraints: unknown family '{}' (tap_sum)", constraints));
    std::string response = response_name(sc.gsc.response.kind);
    s.get("response", response);
    sc.gsc.response.kind = response_kind(response, s.where("response"));
    if (auto v = s.raw("response_values"))
      sc.gsc.response.values = to_double_list(*v, s.where("response_values"));
    s.finish();
    if (sc.gsc.response.kind != ResponseKind::custom && !sc.gsc.response.values.empty())
      throw ConfigError("[gsc] response_values is only valid with response = custom");
  }
  {
    auto s = section("policy");
    std::string mode = policy_name(sc.policy.mode);
    s.get("mode", mode);
    sc.policy.mode = policy_mode(mode, s.where("mode"));
    s.get("mu_aec", sc.policy.mu_aec);
    s.get("mu_bf", sc.policy.mu_bf);
    s.get("budget", sc.policy.budget);
    if (auto v = s.raw("aec_fraction"); v && !v->empty())
      sc.policy.aec_fraction = to_double(*v, s.where("aec_fraction"));
    s.get("lambda", sc.policy.lambda);
    std::string mp;
    s.get("matrix_path", mp);
    sc.policy.matrix_path = resolve_path(mp, base_dir);
    s.get("refresh_every", sc.policy.refresh_every);
    s.finish();
    load_matrix(sc.policy);
  }
  {
    auto it = tree.find("schedule");
    if (it != tree.not_found()) {
      std::map<int, std::string> events;
      for (const auto& [k, v] : it->second) {
        int idx = -1;
        if (k.rfind("event", 0) == 0 && k.size() > 5) {
          const std::string digits = k.substr(5);
          auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
          if (ec != std::errc() || p != digits.data() + digits.size() || idx < 1) idx = -1;
        }
        if (idx < 0) throw ConfigError(fmt::format("unknown key '{}' in [schedule]", k));
        if (!events.emplace(idx, trim(v.data())).second)
          throw ConfigError(fmt::format("[schedule] key '{}' appears twice", k));
      }
      int expect = 1;
      for (const auto& [idx, text] : events) {
        if (idx != expect)
          throw ConfigError(fmt::format("[schedule] event{} is missing", expect));
        ++expect;
        sc.events.push_back(parse_event(text, base_dir));
      }
    }
  }
  {
    auto s = section("montecarlo");
    s.get("runs", sc.runs);
    s.get("samples", sc.samples);
    s.get("seed", sc.seed);
    s.get("prefill", sc.prefill);
    s.get("smoothing", sc.smoothing);
    s.get("threads", sc.threads);
    s.finish();
    if (sc.runs < 1) throw ConfigError("[montecarlo] runs must be >= 1");
    if (sc.samples < 1) throw ConfigError("[montecarlo] samples must be >= 1");
    if (sc.smoothing < 1) throw ConfigError("[montecarlo] smoothing must be >= 1");
    if (sc.threads < 0) throw ConfigError("[montecarlo] threads must be >= 0");
  }
  {
    auto s = section("design");
    auto& d = cfg.design;
    s.get("target_jinf_db", d.target_jinf_db);
    s.get("max_j_db", d.max_j_db);
    if (auto v = s.raw("at_n"); v && !v->empty()) d.at_n = to_int<std::int64_t>(*v, s.where("at_n"));
    if (auto v = s.raw("at_seconds"); v && !v->empty())
      d.at_seconds = to_double(*v, s.where("at_seconds"));
    if (auto v = s.raw("mics")) d.mics = to_int_list(*v, s.where("mics"));
    if (auto v = s.raw("aec_taps")) d.aec_taps = to_int_list(*v, s.where("aec_taps"));
    if (auto v = s.raw("budgets")) d.budgets = to_double_list(*v, s.where("budgets"));
    if (auto v = s.raw("fractions")) d.fractions = to_double_list(*v, s.where("fractions"));
    s.finish();
    if (d.budgets.empty()) d.budgets = default_budget_grid();
    if (d.fractions.empty()) d.fractions = default_fraction_grid();
    if (d.aec_taps.empty()) d.aec_taps = {sc.gsc.aec_taps};
  }
  {
    auto s = section("output");
    s.get("dir", cfg.output.dir);
    s.get("prefix", cfg.output.prefix);
    s.finish();
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  auto dir = std::filesystem::path(path).parent_path().string();
  return parse_config_string(ss.str(), dir.empty() ? "." : dir);
}

std::string emit_config(const RunConfig& cfg) {
  const Scenario& sc = cfg.scenario;
  const auto& d = cfg.design;
  std::string o;
  auto ints = [](const std::vector<int>& v) { return fmt::format("{}", fmt::join(v, ",")); };
  o += "[plant]\n";
  o += fmt::format("mics = {}\ntaps = {}\nfs = {}\nt60 = {}\noversample = {}\n", sc.plant.mics,
                   sc.plant.taps, g17(sc.plant.fs), g17(sc.plant.t60), sc.plant.oversample);
  o += fmt::format("mic_spacing = {}\nseed = {}\nper_run = {}\n\n", sc.plant.mic_spacing,
                   sc.plant.seed, sc.plant_per_run ? "true" : "false");
  o += "[signals]\n";
  o += fmt::format("far_end = {}\na1 = {}\nvariance = {}\n", far_end_name(sc.far_end.kind),
                   g17(sc.far_end.a1), g17(sc.far_end.variance));
  if (!sc.far_end.path.empty()) o += fmt::format("path = {}\n", sc.far_end.path);
  o += fmt::format("eta = {}\nnoise_var = {}\n", g17(sc.far_end.eta), g17(sc.noise_var));
  if (!sc.steer_delays.empty()) o += fmt::format("steer_delays = {}\n", ints(sc.steer_delays));
  o += "\n[gsc]\n";
  o += fmt::format("bf_taps = {}\naec_taps = {}\nconstraints = tap_sum\nresponse = {}\n",
                   sc.gsc.bf_taps, sc.gsc.aec_taps, response_name(sc.gsc.response.kind));
  if (!sc.gsc.response.values.empty())
    o += fmt::format("response_values = {}\n", join_doubles(sc.gsc.response.values));
  o += "\n[policy]\n";
  const auto& p = sc.policy;
  o += fmt::format("mode = {}\nmu_aec = {}\nmu_bf = {}\nbudget = {}\n", policy_name(p.mode),
                   g17(p.mu_aec), g17(p.mu_bf), g17(p.budget));
  if (p.aec_fraction) o += fmt::format("aec_fraction = {}\n", g17(*p.aec_fraction));
  o += fmt::format("lambda = {}\n", g17(p.lambda));
  if (!p.matrix_path.empty()) o += fmt::format("matrix_path = {}\n", p.matrix_path);
  o += fmt::format("refresh_every = {}\n", p.refresh_every);
  if (!sc.events.empty()) {
    o += "\n[schedule]\n";
    for (std::size_t i = 0; i < sc.events.size(); ++i)
      o += fmt::format("event{} = {}\n", i + 1, format_event(sc.events[i]));
  }
  o += "\n[montecarlo]\n";
  o += fmt::format("runs = {}\nsamples = {}\nseed = {}\nprefill = {}\nsmoothing = {}\nthreads = {}\n",
                   sc.runs, sc.samples, sc.seed, sc.prefill ? "true" : "false", sc.smoothing,
                   sc.threads);
  o += "\n[design]\n";
  o += fmt::format("target_jinf_db = {}\nmax_j_db = {}\n", g17(d.target_jinf_db), g17(d.max_j_db));
  if (d.at_n) o += fmt::format("at_n = {}\n", *d.at_n);
  if (d.at_seconds) o += fmt::format("at_seconds = {}\n", g17(*d.at_seconds));
  o += fmt::format("mics = {}\naec_taps = {}\nbudgets = {}\nfractions = {}\n", ints(d.mics),
                   ints(d.aec_taps), join_doubles(d.budgets), join_doubles(d.fractions));
  o += "\n[output]\n";
  o += fmt::format("dir = {}\nprefix = {}\n", cfg.output.dir, cfg.output.prefix);
  return o;
}

}  // namespace gscaec
