#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsmt/losses.hpp"
#include "dsmt/model.hpp"

namespace dsmt {

class AdamOptimizer;

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train_loss;  // epoch mean over steps
  double val_mae = 0.0;
  double lr = 0.0;
};

struct TrainState {
  int epoch = 0;  // epochs completed so far
  double best_val_mae = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  std::vector<EpochRecord> history;
};

// Self-describing checkpoint container: magic "DMCK", version, a JSON
// header (model config, train state, array directory, optimizer metadata)
// and a payload of named little-endian f32 arrays.
void save_checkpoint(const std::string& path, DsmtModel& model,
                     const TrainState& state,
                     const AdamOptimizer* optimizer = nullptr);

ModelConfig peek_checkpoint_config(const std::string& path);

// Loads arrays into an already-built model whose config must match the
// stored one; returns the stored train state. Optimizer state is restored
// when `optimizer` is non-null and the file carries it.
TrainState load_checkpoint_into(const std::string& path, DsmtModel& model,
                                AdamOptimizer* optimizer = nullptr);

}  // namespace dsmt
