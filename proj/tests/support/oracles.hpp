#pragma once

// Straight-line re-implementations of the composite loss and the evaluation
// metrics, kept deliberately independent of the library code paths they
// check. Everything here is test-only.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace oracle {

inline double mean_sq_err(const std::vector<double>& x,
                          const std::vector<double>& xhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    s += (x[i] - xhat[i]) * (x[i] - xhat[i]);
  return s / static_cast<double>(x.size());
}

inline double mean_abs_err(const std::vector<double>& y,
                           const std::vector<double>& yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

inline double mean_bce(const std::vector<double>& y,
                       const std::vector<double>& p, double eps = 1e-7) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = std::min(std::max(p[i], eps), 1.0 - eps);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return s / static_cast<double>(y.size());
}

// Full nested evaluation: reconstruction + deep-supervised age and sex terms
// combined through the alpha/beta/gamma/eta hierarchy.
struct TotalLossInputs {
  std::vector<double> x, xhat;
  std::vector<double> y_ba, yhat_f;
  std::map<int, std::vector<double>> yhat_d;
  std::vector<double> y_gc, p_f;
  std::map<int, std::vector<double>> p_d;
  double alpha = 0.5, beta = 0.5, gamma = 0.5;
  std::map<int, double> eta;
};

inline double total_loss(const TotalLossInputs& in) {
  const double l_ae = mean_sq_err(in.x, in.xhat);
  const double l_ba_f = mean_abs_err(in.y_ba, in.yhat_f);
  const double l_gc_f = mean_bce(in.y_gc, in.p_f);
  double ba_shallow = 0.0, gc_shallow = 0.0;
  for (const auto& [d, yhat] : in.yhat_d)
    ba_shallow += in.eta.at(d) * mean_abs_err(in.y_ba, yhat);
  for (const auto& [d, p] : in.p_d)
    gc_shallow += in.eta.at(d) * mean_bce(in.y_gc, p);
  const double l_ba = in.gamma * l_ba_f + (1.0 - in.gamma) * ba_shallow;
  const double l_gc = in.gamma * l_gc_f + (1.0 - in.gamma) * gc_shallow;
  const double l_dst = in.beta * l_ba + (1.0 - in.beta) * l_gc;
  return in.alpha * l_ae + (1.0 - in.alpha) * l_dst;
}

// Brute-force metric recomputations.
inline double brute_mae(const std::vector<double>& y,
                        const std::vector<double>& yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

inline double brute_sd(const std::vector<double>& y,
                       const std::vector<double>& yhat) {
  std::vector<double> e(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) e[i] = y[i] - yhat[i];
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= static_cast<double>(e.size());
  double var = 0.0;
  for (double v : e) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(e.size()));
}

inline double brute_rmse(const std::vector<double>& y,
                         const std::vector<double>& yhat) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double brute_r2(const std::vector<double>& y,
                       const std::vector<double>& yhat) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

}  // namespace oracle
