#pragma once

#include <string>
#include <vector>

#include "dsmt/ensemble.hpp"
#include "dsmt/metrics.hpp"
#include "dsmt/trainer.hpp"

namespace dsmt {

// Evaluation-mode predictions of every head over the validation split, in
// sorted subject order.
HeadPredictions predict_heads(DsmtModel& model, const TrainData& data,
                              int batch_size);

// Age prediction used for reporting: the self-ensemble when the variant has
// shallow heads, the final head otherwise.
struct EvalPredictions {
  HeadPredictions heads;
  std::vector<double> y_pred;  // reporting prediction per subject
  bool used_ensemble = false;
  EnsembleSearchResult ensemble;  // meaningful when used_ensemble
};

EvalPredictions evaluate_predictions(DsmtModel& model, const TrainData& data,
                                     int batch_size);

// Prediction dump: subject_id, y_true, y_pred_final, y_pred_d per depth,
// y_pred_ensemble, sex.
void write_prediction_dump(const std::string& path,
                           const EvalPredictions& preds);

std::string format_stratified_report(const StratifiedReport& rep);
void write_stratified_csv(const std::string& path,
                          const StratifiedReport& rep);

// ---------------------------------------------------------------------------
// Ablation harness

struct AblationConfig {
  ModelConfig model;  // template; the variant field is overridden per row
  TrainConfig train;
  std::vector<double> bracket_edges = kDefaultBracketEdges;
};

struct VariantResult {
  Variant variant = Variant::kBaseline;
  bool ok = false;
  std::string error;  // populated when the variant failed to train
  StratifiedReport report;
  bool used_ensemble = false;
  EnsembleWeights ensemble;
  std::vector<double> y_true, y_pred;
  std::vector<int> sexes;
};

struct AblationResult {
  std::vector<VariantResult> rows;  // Baseline, AE, MTL-AE, DS-AE, DSMT-AE
};

// Trains all five variants under the identical protocol and reports
// Overall/Male/Female MAE+/-SD, RMSE, R2 per variant. A variant that fails
// yields an error row; the others still run.
AblationResult run_ablation(const TrainData& data, const AblationConfig& cfg);

// Human-readable comparison table in the familiar three-group layout.
std::string format_ablation_table(const AblationResult& result);
void write_ablation_csv(const std::string& path, const AblationResult& result);

}  // namespace dsmt
