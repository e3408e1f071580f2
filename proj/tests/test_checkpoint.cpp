#include "dsmt/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dsmt/trainer.hpp"

using namespace dsmt;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(Variant v = Variant::kDsmtAe) {
  ModelConfig cfg;
  cfg.side = 8;
  cfg.block_channels = {2, 2, 3, 3, 4};
  cfg.supervision_depths = {2, 3};
  cfg.latent_dim = 5;
  cfg.head_hidden = {5, 4};
  cfg.dropout_rate = 0.1;
  return cfg;
}

fs::path temp_file(const std::string& name) {
  return fs::path(testing::TempDir()) / name;
}

}  // namespace

TEST(Checkpoint, RoundTripWeightsAndState) {
  DsmtModel model(tiny(), 3);
  TrainState state;
  state.epoch = 17;
  state.best_val_mae = 3.25;
  state.best_epoch = 12;
  state.epochs_since_improvement = 5;

  const auto path = temp_file("ckpt_roundtrip.ckpt").string();
  save_checkpoint(path, model, state);

  EXPECT_EQ(peek_checkpoint_config(path).side, 8);

  DsmtModel loaded(tiny(), 999);  // different seed: different weights
  TrainState got = load_checkpoint_into(path, loaded);
  EXPECT_EQ(got.epoch, 17);
  EXPECT_DOUBLE_EQ(got.best_val_mae, 3.25);
  EXPECT_EQ(got.best_epoch, 12);

  // Stored weights are f32-quantized; loading reproduces that quantization.
  auto pa = model.params();
  auto pb = loaded.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.numel(); ++j)
      EXPECT_EQ(pb[i]->value[j],
                static_cast<double>(static_cast<float>(pa[i]->value[j])));
  fs::remove(path);
}

TEST(Checkpoint, BuffersTravelToo) {
  DsmtModel model(tiny(), 3);
  auto buffers = model.buffers();
  buffers[0]->value[0] = 0.123456;
  const auto path = temp_file("ckpt_buffers.ckpt").string();
  save_checkpoint(path, model, {});
  DsmtModel loaded(tiny(), 4);
  load_checkpoint_into(path, loaded);
  EXPECT_EQ(loaded.buffers()[0]->value[0],
            static_cast<double>(static_cast<float>(0.123456)));
  fs::remove(path);
}

TEST(Checkpoint, OptimizerStateRoundTrip) {
  DsmtModel model(tiny(), 5);
  auto params = model.params();
  AdamOptimizer adam;
  adam.attach(params);
  model.zero_grads();
  for (auto* p : params)
    for (std::size_t j = 0; j < p->grad.numel(); ++j) p->grad[j] = 0.01;
  adam.step(params, 0.001);
  adam.step(params, 0.001);

  const auto path = temp_file("ckpt_opt.ckpt").string();
  save_checkpoint(path, model, {}, &adam);

  DsmtModel loaded(tiny(), 6);
  AdamOptimizer restored;
  load_checkpoint_into(path, loaded, &restored);
  EXPECT_EQ(restored.timestep(), 2);
  ASSERT_EQ(restored.first_moments().size(), adam.first_moments().size());
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i)
    for (std::size_t j = 0; j < adam.first_moments()[i].numel(); ++j)
      EXPECT_EQ(restored.first_moments()[i][j],
                static_cast<double>(
                    static_cast<float>(adam.first_moments()[i][j])));
  fs::remove(path);
}

TEST(Checkpoint, IncompatibleModelRejected) {
  DsmtModel model(tiny(), 3);
  const auto path = temp_file("ckpt_mismatch.ckpt").string();
  save_checkpoint(path, model, {});

  ModelConfig other = tiny();
  other.latent_dim = 7;
  DsmtModel wrong(other, 3);
  EXPECT_THROW(load_checkpoint_into(path, wrong), ConfigError);

  ModelConfig other_variant = tiny();
  other_variant.variant = Variant::kAe;
  DsmtModel wrong2(other_variant, 3);
  EXPECT_THROW(load_checkpoint_into(path, wrong2), ConfigError);
  fs::remove(path);
}

TEST(Checkpoint, CorruptFilesRejected) {
  DsmtModel model(tiny(), 3);
  const auto path = temp_file("ckpt_trunc.ckpt").string();
  save_checkpoint(path, model, {});
  fs::resize_file(path, fs::file_size(path) / 2);
  DsmtModel target(tiny(), 3);
  EXPECT_THROW(load_checkpoint_into(path, target), FormatError);

  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(peek_checkpoint_config(path), FormatError);
  EXPECT_THROW(load_checkpoint_into(path, target), FormatError);
  fs::remove(path);
}
