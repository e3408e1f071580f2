#include "dsmt/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dsmt/trainer.hpp"

namespace dsmt {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"side", cfg.side},
              {"in_channels", cfg.in_channels},
              {"block_channels", cfg.block_channels},
              {"supervision_depths", cfg.supervision_depths},
              {"latent_dim", cfg.latent_dim},
              {"head_hidden", cfg.head_hidden},
              {"dropout_rate", cfg.dropout_rate},
              {"variant", variant_name(cfg.variant)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.side = j.at("side").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.block_channels = j.at("block_channels").get<std::vector<int>>();
  cfg.supervision_depths =
      j.at("supervision_depths").get<std::vector<int>>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.head_hidden = j.at("head_hidden").get<std::vector<int>>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  return cfg;
}

struct NamedArrayRef {
  std::string name;
  const Tensor* data;
};

json read_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  if (!f || version != kVersion)
    throw FormatError("unsupported checkpoint version in " + path);
  std::uint64_t header_len = 0;
  f.read(reinterpret_cast<char*>(&header_len), 8);
  if (!f || header_len == 0 || header_len > (1ull << 30))
    throw FormatError("bad checkpoint header in " + path);
  std::string text(header_len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw FormatError("truncated checkpoint header in " + path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path + ": " +
                      e.what());
  }
}

void write_f32_array(std::ofstream& f, const Tensor& t) {
  std::vector<float> buf(t.numel());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(t[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_f32_array(std::ifstream& f, Tensor& t, const std::string& path) {
  std::vector<float> buf(t.numel());
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw FormatError("truncated checkpoint payload in " + path);
  for (std::size_t i = 0; i < buf.size(); ++i)
    t[i] = static_cast<double>(buf[i]);
}

}  // namespace

void save_checkpoint(const std::string& path, DsmtModel& model,
                     const TrainState& state, const AdamOptimizer* optimizer) {
  auto params = model.params();
  auto buffers = model.buffers();

  std::vector<NamedArrayRef> arrays;
  for (auto* p : params) arrays.push_back({p->name, &p->value});
  for (auto* b : buffers) arrays.push_back({b->name, &b->value});
  if (optimizer) {
    auto& m = const_cast<AdamOptimizer*>(optimizer)->first_moments();
    auto& v = const_cast<AdamOptimizer*>(optimizer)->second_moments();
    if (m.size() != params.size())
      throw ParameterError("optimizer state does not match model");
    for (std::size_t i = 0; i < params.size(); ++i)
      arrays.push_back({"opt.m." + params[i]->name, &m[i]});
    for (std::size_t i = 0; i < params.size(); ++i)
      arrays.push_back({"opt.v." + params[i]->name, &v[i]});
  }

  json dir = json::array();
  for (const auto& a : arrays)
    dir.push_back({{"name", a.name}, {"count", a.data->numel()}});

  json header{
      {"model", model_config_to_json(model.config())},
      {"state",
       {{"epoch", state.epoch},
        {"best_val_mae", std::isfinite(state.best_val_mae)
                             ? json(state.best_val_mae)
                             : json()},
        {"best_epoch", state.best_epoch},
        {"epochs_since_improvement", state.epochs_since_improvement}}},
      {"arrays", dir},
      {"optimizer",
       {{"present", optimizer != nullptr},
        {"t", optimizer ? optimizer->timestep() : 0},
        {"beta1", optimizer ? optimizer->beta1() : 0.9},
        {"beta2", optimizer ? optimizer->beta2() : 0.999},
        {"eps", optimizer ? optimizer->eps() : 1e-8}}}};

  const std::string text = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint64_t header_len = text.size();
  f.write(reinterpret_cast<const char*>(&header_len), 8);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays) write_f32_array(f, *a.data);
  if (!f) throw IoError("short write to checkpoint " + path);
}

ModelConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  return model_config_from_json(read_header(f, path).at("model"));
}

TrainState load_checkpoint_into(const std::string& path, DsmtModel& model,
                                AdamOptimizer* optimizer) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  const json header = read_header(f, path);

  const ModelConfig stored = model_config_from_json(header.at("model"));
  const ModelConfig& have = model.config();
  if (stored.side != have.side || stored.in_channels != have.in_channels ||
      stored.block_channels != have.block_channels ||
      stored.supervision_depths != have.supervision_depths ||
      stored.latent_dim != have.latent_dim ||
      stored.head_hidden != have.head_hidden ||
      stored.variant != have.variant)
    throw ConfigError("checkpoint " + path +
                      " is incompatible with the configured model");

  auto params = model.params();
  auto buffers = model.buffers();
  std::map<std::string, Tensor*> by_name;
  for (auto* p : params) by_name[p->name] = &p->value;
  for (auto* b : buffers) by_name[b->name] = &b->value;

  const bool opt_present =
      header.at("optimizer").at("present").get<bool>();
  if (optimizer && opt_present) {
    optimizer->attach(params);
    optimizer->set_timestep(header.at("optimizer").at("t").get<long long>());
    auto& m = optimizer->first_moments();
    auto& v = optimizer->second_moments();
    for (std::size_t i = 0; i < params.size(); ++i) {
      by_name["opt.m." + params[i]->name] = &m[i];
      by_name["opt.v." + params[i]->name] = &v[i];
    }
  }

  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      // Skip arrays the caller does not want (e.g. optimizer state).
      f.seekg(static_cast<std::streamoff>(count * sizeof(float)),
              std::ios::cur);
      continue;
    }
    if (it->second->numel() != count)
      throw FormatError("checkpoint array size mismatch for " + name);
    read_f32_array(f, *it->second, path);
  }

  TrainState state;
  const auto& s = header.at("state");
  state.epoch = s.at("epoch").get<int>();
  state.best_val_mae = s.at("best_val_mae").is_null()
                           ? std::numeric_limits<double>::infinity()
                           : s.at("best_val_mae").get<double>();
  state.best_epoch = s.at("best_epoch").get<int>();
  state.epochs_since_improvement =
      s.at("epochs_since_improvement").get<int>();
  return state;
}

}  // namespace dsmt
