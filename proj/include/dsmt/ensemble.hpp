#pragma once

#include <map>
#include <vector>

#include "dsmt/model.hpp"

namespace dsmt {

// Weights of the inference-time self-ensemble over the final and shallow
// age regressors. omega holds one weight per shallow depth and sums to 1.
struct EnsembleWeights {
  double rho = 1.0;
  std::map<int, double> omega;

  void validate() const;
};

// rho * yhat_final + (1 - rho) * sum_d omega_d * yhat_d for one subject.
double ensemble_predict(double age_final,
                        const std::map<int, double>& age_shallow,
                        const EnsembleWeights& w);

// Batch version over model outputs.
std::vector<double> ensemble_predict(const ModelOutputs& outputs,
                                     const EnsembleWeights& w);

// Per-head validation predictions, the raw material for the weight search
// and for prediction dumps.
struct HeadPredictions {
  std::vector<double> y_true;
  std::vector<double> final_head;
  std::map<int, std::vector<double>> shallow;  // per depth
  std::vector<int> sexes;
  std::vector<double> sex_prob_final;  // empty for variants without sex
  std::vector<std::string> subject_ids;
};

struct EnsembleSearchResult {
  EnsembleWeights weights;
  double val_mae = 0.0;       // of the returned ensemble
  double final_head_mae = 0.0;
  std::map<int, double> shallow_mae;
};

// Omega from inverse shallow-head MAE; rho from a 21-point grid over
// [0, 1] minimizing ensemble validation MAE, ties broken toward the
// largest rho. Guaranteed not to exceed the final head's MAE.
EnsembleSearchResult search_weights(const HeadPredictions& val_preds);

}  // namespace dsmt
