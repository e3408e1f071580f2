#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dsmt/checkpoint.hpp"
#include "dsmt/dataset.hpp"
#include "dsmt/losses.hpp"
#include "dsmt/model.hpp"
#include "dsmt/volume.hpp"

namespace dsmt {

// Adaptive-moment optimizer with conventional defaults.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void attach(const std::vector<Param*>& params);
  void step(const std::vector<Param*>& params, double lr);

  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }
  long long timestep() const { return t_; }
  void set_timestep(long long t) { t_ = t; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct GridSpec {
  std::vector<double> alpha = {0.2, 0.5, 0.8};
  std::vector<double> beta = {0.2, 0.5, 0.8};
  std::vector<double> gamma = {0.2, 0.5, 0.8};
  std::vector<double> fine_offsets = {-0.1, -0.05, 0.0, 0.05, 0.1};
  int epochs_per_point = 10;
};

struct TrainConfig {
  int epochs = 200;
  int batch_train = 4;
  int batch_val = 2;
  double lr0 = 0.001;
  int patience = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  GridSpec grid;
  bool deterministic = true;
  bool augment_enabled = true;
  AugmentationConfig augmentation;

  void validate() const;
};

// Samples preprocessed to the model side plus the id-level split.
struct TrainData {
  std::vector<VolumeSample> samples;
  DatasetSplit split;
};

struct TrainOptions {
  std::string best_checkpoint_path;  // written on every improvement
  std::string last_checkpoint_path;  // written when training ends
  std::string log_prefix;            // <prefix>_steps.csv / <prefix>_epochs.csv
  const TrainState* resume = nullptr;
  AdamOptimizer* resume_optimizer = nullptr;
};

// Cosine annealing to zero across the full epoch budget, stepped per epoch.
double cosine_lr(int epoch, int total_epochs, double lr0);

// Patience-based stopping on a monitored metric (lower is better).
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Feed one epoch's metric; returns true when training should stop after
  // this epoch.
  bool observe(int epoch, double metric);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_improvement() const { return since_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int since_ = 0;
  bool improved_ = false;
};

struct BatchTargets {
  std::vector<double> age;
  std::vector<double> sex;
};

struct LossEval {
  LossBreakdown breakdown;
  OutputGrads grads;
};

// Composite loss of one forward pass plus the output gradients scaled by
// the variant's mixing coefficients. Heads with a zero coefficient are
// skipped entirely and contribute no gradient.
LossEval evaluate_loss(const ModelOutputs& outputs, const Tensor& input,
                       const BatchTargets& targets, const LossWeights& w,
                       Variant variant, bool with_grads);

// Full optimization drive: epoch loop, cosine schedule, early stopping on
// final-head validation MAE, best-weight restoration, checkpointing.
TrainState train(DsmtModel& model, const TrainData& data,
                 const TrainConfig& cfg, const TrainOptions& opts = {});

// Final-head validation MAE in evaluation mode.
double validation_mae(DsmtModel& model, const TrainData& data,
                      int batch_size);

struct GridPoint {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double val_mae = 0.0;
};

struct GridSearchResult {
  LossWeights best;
  double best_val_mae = 0.0;
  std::vector<GridPoint> coarse;
  std::vector<GridPoint> fine;
};

// Coarse-to-fine search over (alpha, beta, gamma) with a short training
// budget per point; ties break toward the lexicographically smallest
// triple.
GridSearchResult grid_search(const ModelConfig& model_cfg,
                             const TrainData& data, const TrainConfig& base);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int sampled = 0;
  double loss = 0.0;
};

// Central finite differences against the analytic gradient on a batch of
// random phantoms; dropout disabled, double precision throughout.
// corrupt_analytic biases the analytic side and exists solely as a
// negative-control hook for the checker itself.
GradCheckResult gradient_check(DsmtModel& model, const LossWeights& w,
                               int n_params_sampled, std::uint64_t seed,
                               double fd_step = 1e-5,
                               double corrupt_analytic = 0.0);

}  // namespace dsmt
