#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gscaec/design_search.hpp"
#include "gscaec/harness.hpp"

namespace gscaec {

/// Header `n,J_mc,J_model,J_mc_dB,J_model_dB,warmup`, 9 significant digits,
/// LF line endings.
std::string format_curve_csv(const LearningCurve& curve);
void write_curve_csv(const LearningCurve& curve, const std::string& path);

struct CurveRow {
  std::int64_t n = 0;
  double J_mc = 0;
  double J_model = 0;
  double J_mc_db = 0;
  double J_model_db = 0;
  bool warmup = false;
};
std::vector<CurveRow> read_curve_csv(const std::string& path);
std::vector<CurveRow> parse_curve_csv(const std::string& text);

/// Plain numeric matrix, one row per line.
std::string format_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header = {});
void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path,
                      const std::vector<std::string>& header = {});
/// Reads a numeric matrix; a non-numeric first line is skipped as a header.
Eigen::MatrixXd read_matrix_csv(const std::string& path);

std::string format_design_csv(const DesignResult& result);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gscaec
