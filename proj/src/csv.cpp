#include "gscaec/csv.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <limits>
#include <sstream>

#include "gscaec/errors.hpp"

namespace gscaec {
namespace {

std::string num(double v) { return fmt::format("{:.9g}", v); }

double parse_number(std::string_view s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(fmt::format("{}: '{}' is not a number", where, s));
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? line.npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open '{}': {}", path, std::strerror(errno)));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec)
      throw ConfigError(fmt::format("cannot create directory '{}': {}", p.parent_path().string(),
                                    ec.message()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}': {}", path, std::strerror(errno)));
  out << text;
  out.flush();
  if (!out) throw ConfigError(fmt::format("write to '{}' failed", path));
}

std::string format_curve_csv(const LearningCurve& curve) {
  std::string out = "n,J_mc,J_model,J_mc_dB,J_model_dB,warmup\n";
  const std::size_t n = curve.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < n; ++i) {
    const double mc = i < curve.J_mc.size() ? curve.J_mc[i] : nan;
    const double md = i < curve.J_model.size() ? curve.J_model[i] : nan;
    out += fmt::format("{},{},{},{},{},{}\n", i, num(mc), num(md), num(LearningCurve::to_db(mc)),
                       num(LearningCurve::to_db(md)),
                       curve.flagged(static_cast<std::int64_t>(i)) ? 1 : 0);
  }
  return out;
}

void write_curve_csv(const LearningCurve& curve, const std::string& path) {
  write_text_file(path, format_curve_csv(curve));
}

std::vector<CurveRow> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "n,J_mc,J_model,J_mc_dB,J_model_dB,warmup")
    throw ConfigError("curve CSV has an unexpected header");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = fmt::format("curve CSV row {}", rows.size() + 1);
    if (f.size() != 6) throw ConfigError(where + ": expected 6 fields");
    CurveRow r;
    r.n = static_cast<std::int64_t>(parse_number(f[0], where));
    r.J_mc = parse_number(f[1], where);
    r.J_model = parse_number(f[2], where);
    r.J_mc_db = parse_number(f[3], where);
    r.J_model_db = parse_number(f[4], where);
    r.warmup = parse_number(f[5], where) != 0;
    rows.push_back(r);
  }
  return rows;
}

std::vector<CurveRow> read_curve_csv(const std::string& path) {
  return parse_curve_csv(read_text_file(path));
}

std::string format_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty()) out += fmt::format("{}\n", fmt::join(header, ","));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += fmt::format("{:.17g}", m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path,
                      const std::vector<std::string>& header) {
  write_text_file(path, format_matrix_csv(m, header));
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    std::vector<double> row;
    try {
      for (auto v : f) row.push_back(parse_number(v, path));
    } catch (const ConfigError&) {
      if (first) {
        first = false;
        continue;
      }
      throw;
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError(fmt::format("{}: ragged matrix row {}", path, rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(fmt::format("{}: no matrix rows", path));
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::string format_design_csv(const DesignResult& result) {
  std::string out =
      "rank,M,N_AEC,feasible,budget,aec_fraction,mu_aec,mu_bf,J_min_dB,J_inf_dB,J_at_n_dB,"
      "whitened_lambda,whitened_J_at_n_dB,reason\n";
  int rank = 0;
  for (const auto& p : result.points) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"\n", ++rank, p.mics,
                       p.aec_taps, p.feasible ? 1 : 0, num(p.budget), num(p.fraction),
                       num(p.mu_aec), num(p.mu_bf), num(p.J_min_db), num(p.J_inf_db),
                       num(p.J_at_n_db), num(p.whitened_lambda), num(p.whitened_J_at_n_db),
                       p.reason);
  }
  return out;
}

}  // namespace gscaec
