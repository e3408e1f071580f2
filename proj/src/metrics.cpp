#include "dsmt/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "dsmt/errors.hpp"

namespace dsmt {

namespace {

void require_aligned(const std::vector<double>& y,
                     const std::vector<double>& yhat, const char* what) {
  if (y.empty()) throw ParameterError(std::string(what) + ": empty input");
  if (y.size() != yhat.size())
    throw ShapeError(std::string(what) + ": length mismatch");
}

std::string format_edge(double e) {
  char buf[32];
  if (e == std::floor(e))
    std::snprintf(buf, sizeof(buf), "%.0f", e);
  else
    std::snprintf(buf, sizeof(buf), "%g", e);
  return buf;
}

}  // namespace

double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
  require_aligned(y, yhat, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double error_sd(const std::vector<double>& y,
                const std::vector<double>& yhat) {
  require_aligned(y, yhat, "error_sd");
  const double n = static_cast<double>(y.size());
  double mean_err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mean_err += y[i] - yhat[i];
  mean_err /= n;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = (y[i] - yhat[i]) - mean_err;
    acc += d * d;
  }
  return std::sqrt(acc / n);
}

double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
  require_aligned(y, yhat, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

double r2(const std::vector<double>& y, const std::vector<double>& yhat) {
  require_aligned(y, yhat, "r2");
  if (y.size() < 2) throw ParameterError("r2: needs at least two samples");
  double mean_y = 0.0;
  for (double v : y) mean_y += v;
  mean_y /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    const double t = y[i] - mean_y;
    ss_res += e * e;
    ss_tot += t * t;
  }
  if (ss_tot == 0.0)
    throw ParameterError("r2: degenerate target (zero variance in y)");
  return 1.0 - ss_res / ss_tot;
}

MetricsReport compute_metrics(const std::vector<double>& y,
                              const std::vector<double>& yhat) {
  MetricsReport r;
  r.n = y.size();
  if (y.empty()) return r;
  r.mae = mae(y, yhat);
  r.sd = error_sd(y, yhat);
  r.rmse = rmse(y, yhat);
  try {
    r.r2 = r2(y, yhat);
  } catch (const ParameterError&) {
    r.r2 = std::nullopt;
  }
  return r;
}

int bracket_index(double age, const std::vector<double>& edges) {
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (age <= edges[i]) return static_cast<int>(i);
  return static_cast<int>(edges.size());
}

std::string bracket_label(int index, const std::vector<double>& edges) {
  const int last = static_cast<int>(edges.size());
  if (index <= 0) return "<=" + format_edge(edges.front());
  if (index >= last) return ">" + format_edge(edges.back());
  return format_edge(edges[index - 1] + 1) + "-" + format_edge(edges[index]);
}

StratifiedReport stratify(const std::vector<double>& y,
                          const std::vector<double>& yhat,
                          const std::vector<int>& sexes,
                          const std::vector<double>& edges) {
  require_aligned(y, yhat, "stratify");
  if (sexes.size() != y.size()) throw ShapeError("stratify: label mismatch");
  if (edges.empty()) throw ParameterError("stratify: no bracket edges");

  StratifiedReport rep;
  rep.overall = compute_metrics(y, yhat);

  std::vector<double> fy, fyh, my, myh;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (sexes[i] == 0) {
      fy.push_back(y[i]);
      fyh.push_back(yhat[i]);
    } else {
      my.push_back(y[i]);
      myh.push_back(yhat[i]);
    }
  }
  rep.by_sex.female = compute_metrics(fy, fyh);
  rep.by_sex.male = compute_metrics(my, myh);

  const int n_brackets = static_cast<int>(edges.size()) + 1;
  std::vector<std::vector<double>> by(n_brackets), byh(n_brackets);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int b = bracket_index(y[i], edges);
    by[b].push_back(y[i]);
    byh[b].push_back(yhat[i]);
  }
  for (int b = 0; b < n_brackets; ++b) {
    rep.bracket_labels.push_back(bracket_label(b, edges));
    rep.by_bracket.push_back(compute_metrics(by[b], byh[b]));
  }
  return rep;
}

}  // namespace dsmt
