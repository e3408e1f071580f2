#include "dsmt/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "dsmt/dataset.hpp"
#include "dsmt/volume.hpp"

namespace fs = std::filesystem;

namespace dsmt {

namespace {

using nlohmann::json;

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " +
                        e.what());
    }
  }
}

void get_interval(const json& j, const char* key, std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2 || v[0] > v[1])
    throw ConfigError(std::string("config field '") + key +
                      "' must be [lo, hi]");
  out = {v[0], v[1]};
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path q(p);
  return q.is_absolute() ? q.string() : (base / q).string();
}

AugmentationConfig parse_augmentation(const json& j) {
  AugmentationConfig cfg;
  get_if(j, "flip_prob_per_axis", cfg.flip_prob_per_axis);
  get_interval(j, "rotation_range_deg", cfg.rotation_range_deg);
  get_interval(j, "zoom_range", cfg.zoom_range);
  get_if(j, "erase_enabled", cfg.erase_enabled);
  get_interval(j, "erase_side_fraction_range", cfg.erase_side_fraction_range);
  if (cfg.flip_prob_per_axis < 0.0 || cfg.flip_prob_per_axis > 1.0)
    throw ConfigError("augment: flip_prob_per_axis outside [0,1]");
  if (cfg.zoom_range[0] <= 0.0)
    throw ConfigError("augment: zoom factors must be positive");
  if (cfg.erase_side_fraction_range[0] < 0.0 ||
      cfg.erase_side_fraction_range[1] > 1.0)
    throw ConfigError("augment: erase fractions outside [0,1]");
  return cfg;
}

ModelConfig parse_model(const json& j) {
  ModelConfig cfg;
  get_if(j, "side", cfg.side);
  get_if(j, "in_channels", cfg.in_channels);
  get_if(j, "block_channels", cfg.block_channels);
  get_if(j, "supervision_depths", cfg.supervision_depths);
  get_if(j, "latent_dim", cfg.latent_dim);
  get_if(j, "head_hidden", cfg.head_hidden);
  get_if(j, "dropout_rate", cfg.dropout_rate);
  if (j.contains("variant"))
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
  return cfg;
}

LossWeights parse_loss_weights(const json& j,
                               const std::vector<int>& depths) {
  LossWeights w;
  get_if(j, "alpha", w.alpha);
  get_if(j, "beta", w.beta);
  get_if(j, "gamma", w.gamma);
  if (j.contains("eta")) {
    for (const auto& [key, value] : j.at("eta").items()) {
      try {
        w.eta[std::stoi(key)] = value.get<double>();
      } catch (const std::exception&) {
        throw ConfigError("loss_weights.eta keys must be depth integers");
      }
    }
  }
  if (w.eta.empty() && !depths.empty())
    for (int d : depths) w.eta[d] = 1.0 / static_cast<double>(depths.size());
  return w;
}

GridSpec parse_grid(const json& j) {
  GridSpec g;
  get_if(j, "alpha", g.alpha);
  get_if(j, "beta", g.beta);
  get_if(j, "gamma", g.gamma);
  get_if(j, "fine_offsets", g.fine_offsets);
  get_if(j, "epochs_per_point", g.epochs_per_point);
  return g;
}

TrainConfig parse_train(const json& j, const std::vector<int>& depths) {
  TrainConfig cfg;
  get_if(j, "epochs", cfg.epochs);
  get_if(j, "batch_train", cfg.batch_train);
  get_if(j, "batch_val", cfg.batch_val);
  get_if(j, "lr0", cfg.lr0);
  get_if(j, "patience", cfg.patience);
  get_if(j, "adam_beta1", cfg.adam_beta1);
  get_if(j, "adam_beta2", cfg.adam_beta2);
  get_if(j, "adam_eps", cfg.adam_eps);
  get_if(j, "seed", cfg.seed);
  get_if(j, "deterministic", cfg.deterministic);
  get_if(j, "augment_enabled", cfg.augment_enabled);
  if (j.contains("augment"))
    cfg.augmentation = parse_augmentation(j.at("augment"));
  if (j.contains("loss_weights"))
    cfg.loss_weights = parse_loss_weights(j.at("loss_weights"), depths);
  else
    cfg.loss_weights = parse_loss_weights(json::object(), depths);
  if (j.contains("grid")) cfg.grid = parse_grid(j.at("grid"));
  return cfg;
}

PhantomConfig parse_phantom(const json& j) {
  PhantomConfig cfg;
  get_if(j, "side", cfg.side);
  get_interval(j, "age_range", cfg.age_range);
  get_if(j, "ventricle_growth_rate", cfg.ventricle_growth_rate);
  get_if(j, "cortex_thinning_rate", cfg.cortex_thinning_rate);
  get_if(j, "sex_scale_delta", cfg.sex_scale_delta);
  get_if(j, "noise_sigma", cfg.noise_sigma);
  get_if(j, "rng_seed", cfg.rng_seed);
  return cfg;
}

}  // namespace

std::vector<double> default_age_bins(double lo, double hi) {
  std::vector<double> edges;
  for (int k = 1; k < 10; ++k) edges.push_back(lo + (hi - lo) * k / 10.0);
  return edges;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  loss_coefficients(train.loss_weights, model.variant, model.active_depths());
  if (data.val_fraction <= 0.0 || data.val_fraction >= 1.0)
    throw ConfigError("data.val_fraction must be inside (0,1)");
  if (data.crop_margin < 0)
    throw ConfigError("data.crop_margin must be >= 0");
  if (data.synth.count < 1)
    throw ConfigError("data.synth.count must be >= 1");
  if (eval.brackets.empty())
    throw ConfigError("eval.brackets must not be empty");
  for (std::size_t i = 1; i < eval.brackets.size(); ++i)
    if (eval.brackets[i] <= eval.brackets[i - 1])
      throw ConfigError("eval.brackets must be strictly increasing");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }

  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  ExperimentConfig cfg;
  get_if(j, "name", cfg.name);
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  const auto depths = cfg.model.active_depths();
  if (j.contains("train")) cfg.train = parse_train(j.at("train"), depths);
  else cfg.train.loss_weights = parse_loss_weights(json::object(), depths);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    get_if(d, "manifest", cfg.data.manifest);
    get_if(d, "labels", cfg.data.labels);
    get_if(d, "crop_margin", cfg.data.crop_margin);
    get_if(d, "val_fraction", cfg.data.val_fraction);
    get_if(d, "age_bins", cfg.data.age_bins);
    get_if(d, "split_seed", cfg.data.split_seed);
    get_if(d, "use_manifest_split", cfg.data.use_manifest_split);
    if (d.contains("phantom")) {
      get_if(d.at("phantom"), "count", cfg.data.synth.count);
      cfg.data.synth.phantom = parse_phantom(d.at("phantom"));
    }
    cfg.data.manifest = resolve(base, cfg.data.manifest);
    cfg.data.labels = resolve(base, cfg.data.labels);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    get_if(e, "brackets", cfg.eval.brackets);
    get_if(e, "out_dir", cfg.eval.out_dir);
    cfg.eval.out_dir = resolve(base, cfg.eval.out_dir);
  } else {
    cfg.eval.out_dir = resolve(base, cfg.eval.out_dir);
  }

  // Short fingerprint of the canonical serialized config.
  std::ostringstream hash_src;
  hash_src << j.dump();
  const auto h = std::hash<std::string>{}(hash_src.str());
  std::ostringstream hex;
  hex << std::hex << std::setw(8) << std::setfill('0')
      << static_cast<std::uint32_t>(h & 0xffffffffu);
  cfg.config_hash = hex.str();

  cfg.validate();
  return cfg;
}

TrainData load_dataset(const DataConfig& cfg, int side) {
  if (cfg.manifest.empty())
    throw ConfigError("data.manifest is required for this command");
  auto entries = read_manifest(cfg.manifest);
  if (entries.empty()) throw DataError("manifest is empty: " + cfg.manifest);

  LabelTable labels;
  const LabelTable* labels_ptr = nullptr;
  if (!cfg.labels.empty()) {
    labels = read_label_table(cfg.labels);
    labels_ptr = &labels;
  }

  TrainData data;
  bool split_complete = cfg.use_manifest_split;
  for (const auto& e : entries) {
    VolumeSample s = load_volume(e.path, labels_ptr);
    if (!e.subject_id.empty()) s.subject_id = e.subject_id;
    const auto& v = s.voxels;
    const bool ready = v.dim(0) == side && v.dim(1) == side &&
                       v.dim(2) == side && v.min() >= 0.0 && v.max() <= 1.0;
    if (!ready) s.voxels = preprocess_volume(v, side, cfg.crop_margin);
    if (e.split != "train" && e.split != "val") split_complete = false;
    data.samples.push_back(std::move(s));
  }

  if (split_complete) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].split == "train")
        data.split.train_ids.push_back(data.samples[i].subject_id);
      else
        data.split.val_ids.push_back(data.samples[i].subject_id);
    }
    std::sort(data.split.train_ids.begin(), data.split.train_ids.end());
    std::sort(data.split.val_ids.begin(), data.split.val_ids.end());
    data.split.age_bins = cfg.age_bins;
  } else {
    std::vector<double> bins = cfg.age_bins;
    if (bins.empty()) {
      double lo = data.samples.front().age, hi = lo;
      for (const auto& s : data.samples) {
        lo = std::min(lo, s.age);
        hi = std::max(hi, s.age);
      }
      bins = default_age_bins(lo, hi);
    }
    data.split = make_split(data.samples, cfg.val_fraction, bins,
                            cfg.split_seed);
  }
  if (data.split.val_ids.empty() || data.split.train_ids.empty())
    throw DataError("dataset split has an empty partition");
  return data;
}

}  // namespace dsmt
