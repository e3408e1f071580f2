#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dsmt {

// Age-bracket upper edges for the robustness report: <=25, 26-35, 36-45,
// 46-55, 56-65, 66-75, >75.
inline const std::vector<double> kDefaultBracketEdges = {25, 35, 45, 55, 65,
                                                         75};

struct MetricsReport {
  std::size_t n = 0;
  double mae = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // absent when Var(y) is degenerate or n < 2
};

struct SexGroupReports {
  MetricsReport female;
  MetricsReport male;
};

struct StratifiedReport {
  MetricsReport overall;
  SexGroupReports by_sex;
  std::vector<std::string> bracket_labels;
  std::vector<MetricsReport> by_bracket;
};

// Mean absolute error.
double mae(const std::vector<double>& y, const std::vector<double>& yhat);

// Population standard deviation of the signed residuals about their mean.
double error_sd(const std::vector<double>& y, const std::vector<double>& yhat);

double rmse(const std::vector<double>& y, const std::vector<double>& yhat);

// Coefficient of determination; throws ParameterError when Var(y) == 0 or
// fewer than two samples.
double r2(const std::vector<double>& y, const std::vector<double>& yhat);

// All four metrics at once; degenerate r2 becomes nullopt instead of a
// throw so stratified groups stay reportable.
MetricsReport compute_metrics(const std::vector<double>& y,
                              const std::vector<double>& yhat);

// Index of the bracket that contains `age` given ascending upper edges;
// ages above the last edge land in the final open bracket.
int bracket_index(double age, const std::vector<double>& edges);

std::string bracket_label(int index, const std::vector<double>& edges);

// Per-sex and per-age-bracket breakdown; bracket membership uses the true
// (chronological) age.
StratifiedReport stratify(const std::vector<double>& y,
                          const std::vector<double>& yhat,
                          const std::vector<int>& sexes,
                          const std::vector<double>& edges);

}  // namespace dsmt
