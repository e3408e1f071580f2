#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsmt/metrics.hpp"
#include "dsmt/phantom.hpp"
#include "dsmt/trainer.hpp"

namespace dsmt {

struct PhantomDatasetSpec {
  int count = 200;
  PhantomConfig phantom;
};

struct DataConfig {
  std::string manifest;  // dataset manifest path
  std::string labels;    // optional sidecar label table (NIfTI datasets)
  int crop_margin = 2;
  double val_fraction = 0.2;
  std::vector<double> age_bins;  // split stratification edges; empty = ten
                                 // equal-width bins over the observed range
  std::uint64_t split_seed = 1;
  bool use_manifest_split = true;
  PhantomDatasetSpec synth;
};

struct EvalConfig {
  std::vector<double> brackets = kDefaultBracketEdges;
  std::string out_dir = "runs";
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string config_hash;  // short fingerprint of the parsed config

  void validate() const;
};

// Parses and fully validates a hierarchical JSON config; relative paths are
// resolved against the config file's directory. Throws ConfigError before
// any side effect on invalid input.
ExperimentConfig load_experiment_config(const std::string& path);

// Ten equal-width bin edges over [lo, hi] (nine interior edges).
std::vector<double> default_age_bins(double lo, double hi);

// Loads every manifest entry, preprocesses to `side`, and resolves the
// split (manifest column when complete and enabled, stratified otherwise).
TrainData load_dataset(const DataConfig& cfg, int side);

}  // namespace dsmt
