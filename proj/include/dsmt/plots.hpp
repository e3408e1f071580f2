#pragma once

#include <string>
#include <vector>

#include "dsmt/metrics.hpp"

namespace dsmt {

// Half-width of the 95% confidence band: 1.96 x SD of the residuals.
double confidence_band_halfwidth(const std::vector<double>& y,
                                 const std::vector<double>& yhat);

// Predicted-vs-true scatter with identity line, sex colour coding, the 95%
// confidence band (+/- 1.96 x SD of residuals) around the identity line and
// an MAE +/- SD annotation. The csv sidecar carries the raw points so the
// figure is recomputable.
void emit_scatter_plot(const std::string& svg_path,
                       const std::string& csv_path,
                       const std::vector<double>& y,
                       const std::vector<double>& yhat,
                       const std::vector<int>& sexes);

struct BracketSeries {
  std::string label;  // model name
  std::vector<double> mae;
  std::vector<double> sd;
  std::vector<std::size_t> n;
};

// Grouped bar chart of MAE per age bracket per model with SD error bars.
void emit_bracket_bars(const std::string& svg_path,
                       const std::string& csv_path,
                       const std::vector<std::string>& bracket_labels,
                       const std::vector<BracketSeries>& series);

// Convenience wrapper writing both figures for a single model into out_dir.
void emit_plots(const std::vector<double>& y, const std::vector<double>& yhat,
                const std::vector<int>& sexes, const std::string& out_dir,
                const std::vector<double>& bracket_edges = kDefaultBracketEdges,
                const std::string& model_label = "model");

}  // namespace dsmt
