#include "dsmt/ensemble.hpp"

#include <cmath>

#include "dsmt/metrics.hpp"

namespace dsmt {

void EnsembleWeights::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0) || !std::isfinite(rho))
    throw ParameterError("ensemble: rho outside [0,1]");
  if (omega.empty()) return;
  double sum = 0.0;
  for (const auto& [d, v] : omega) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ParameterError("ensemble: omega weight negative or non-finite");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ParameterError("ensemble: omega weights must sum to 1");
}

double ensemble_predict(double age_final,
                        const std::map<int, double>& age_shallow,
                        const EnsembleWeights& w) {
  w.validate();
  if (age_shallow.size() != w.omega.size())
    throw ParameterError("ensemble: omega/depth key mismatch");
  double shallow = 0.0;
  for (const auto& [d, pred] : age_shallow) {
    auto it = w.omega.find(d);
    if (it == w.omega.end())
      throw ParameterError("ensemble: omega missing depth " +
                           std::to_string(d));
    shallow += it->second * pred;
  }
  return w.rho * age_final + (1.0 - w.rho) * shallow;
}

std::vector<double> ensemble_predict(const ModelOutputs& outputs,
                                     const EnsembleWeights& w) {
  std::vector<double> out(outputs.age_final.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::map<int, double> shallow;
    for (const auto& [d, preds] : outputs.age_shallow) shallow[d] = preds[i];
    out[i] = ensemble_predict(outputs.age_final[i], shallow, w);
  }
  return out;
}

EnsembleSearchResult search_weights(const HeadPredictions& val_preds) {
  if (val_preds.y_true.empty())
    throw ParameterError("search_weights: empty validation set");
  if (val_preds.final_head.size() != val_preds.y_true.size())
    throw ParameterError("search_weights: prediction length mismatch");

  EnsembleSearchResult res;
  res.final_head_mae = mae(val_preds.y_true, val_preds.final_head);

  if (val_preds.shallow.empty()) {
    res.weights.rho = 1.0;
    res.val_mae = res.final_head_mae;
    return res;
  }

  // Omega proportional to inverse shallow-head MAE.
  double inv_sum = 0.0;
  for (const auto& [d, preds] : val_preds.shallow) {
    if (preds.size() != val_preds.y_true.size())
      throw ParameterError("search_weights: prediction length mismatch");
    const double m = mae(val_preds.y_true, preds);
    res.shallow_mae[d] = m;
    inv_sum += 1.0 / std::max(m, 1e-12);
  }
  for (const auto& [d, m] : res.shallow_mae)
    res.weights.omega[d] = (1.0 / std::max(m, 1e-12)) / inv_sum;

  // Blended shallow prediction per subject, fixed by omega.
  std::vector<double> blended(val_preds.y_true.size(), 0.0);
  for (const auto& [d, preds] : val_preds.shallow)
    for (std::size_t i = 0; i < preds.size(); ++i)
      blended[i] += res.weights.omega.at(d) * preds[i];

  // 21-point rho grid; ties (within round-off) break toward the largest
  // rho, preferring the principal head. Iterating downward from rho = 1
  // with a noise-guarded strict improvement implements that.
  constexpr double kTieTolerance = 1e-12;
  double best_mae = std::numeric_limits<double>::infinity();
  double best_rho = 1.0;
  std::vector<double> combined(val_preds.y_true.size());
  for (int k = 20; k >= 0; --k) {
    const double rho = static_cast<double>(k) / 20.0;
    for (std::size_t i = 0; i < combined.size(); ++i)
      combined[i] = rho * val_preds.final_head[i] + (1.0 - rho) * blended[i];
    const double m = mae(val_preds.y_true, combined);
    if (m < best_mae - kTieTolerance) {
      best_mae = m;
      best_rho = rho;
    }
  }
  res.weights.rho = best_rho;
  res.val_mae = best_mae;
  return res;
}

}  // namespace dsmt
