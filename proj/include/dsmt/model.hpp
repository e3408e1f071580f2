#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "dsmt/layers.hpp"
#include "dsmt/variant.hpp"

namespace dsmt {

struct ModelConfig {
  int side = 96;
  int in_channels = 1;
  std::vector<int> block_channels = {16, 32, 64, 128, 256};
  std::vector<int> supervision_depths = {2, 3, 4};  // 1-based, subset of 1..4
  int latent_dim = 512;
  std::vector<int> head_hidden = {128, 64};
  double dropout_rate = 0.3;
  Variant variant = Variant::kDsmtAe;

  void validate() const;
  // Spatial sides through the encoder: index 0 is the input side, k is the
  // output of block k (ceil halving).
  std::vector<int> encoder_sides() const;
  // Depths that actually carry shallow heads for this variant.
  std::vector<int> active_depths() const;
};

struct ModelOutputs {
  int batch = 0;
  Tensor reconstruction;  // [N,1,S,S,S]; empty when the variant lacks a decoder
  Tensor latent;          // [N, latent_dim]
  std::vector<double> age_final;
  std::map<int, std::vector<double>> age_shallow;
  std::vector<double> sex_final;  // probabilities in (0,1)
  std::map<int, std::vector<double>> sex_shallow;

  // Ordered views per the output contract: final first, then shallow heads
  // by ascending depth.
  std::vector<const std::vector<double>*> age_preds() const;
  std::vector<const std::vector<double>*> sex_probs() const;
};

// Gradients of the scalar loss with respect to each model output. Empty
// entries contribute nothing (the corresponding head is skipped entirely).
struct OutputGrads {
  Tensor d_reconstruction;
  std::vector<double> d_age_final;
  std::map<int, std::vector<double>> d_age_shallow;
  std::vector<double> d_sex_final;
  std::map<int, std::vector<double>> d_sex_shallow;
};

// Encoder stage: stride-2 3x3x3 convolution + batch norm + ELU with a
// 1x1x1 stride-2 projection skip added before the activation.
class ResBlock {
 public:
  ResBlock(const std::string& name, int in_ch, int out_ch);
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<NamedBuffer*>& out);

 private:
  Conv3d conv_;
  BatchNorm3d bn_;
  Conv3d proj_;
  Elu elu_;
};

// Small supervised head: [GAP ->] dense -> ELU -> dense -> ELU -> dropout ->
// dense(1) [-> sigmoid]. Age heads end linear, sex heads end in a sigmoid.
class BottleneckHead {
 public:
  BottleneckHead(const std::string& name, int in_features,
                 const std::vector<int>& hidden, double dropout_rate,
                 bool sigmoid_output, bool from_volume);
  void init(std::mt19937_64& rng);
  std::vector<double> forward(const Tensor& input, const ForwardCtx& ctx);
  Tensor backward(const std::vector<double>& d_out);
  void collect(std::vector<Param*>& out);

 private:
  bool from_volume_, sigmoid_;
  GlobalAvgPool3d gap_;
  Dense fc1_, fc2_, out_;
  Elu elu1_, elu2_;
  Dropout drop_;
  SigmoidLayer sig_;
};

// Latent back to image space: dense expansion to the deepest feature map,
// then five stride-2 transposed convolutions; batch norm + ELU between
// stages and a sigmoid on the output.
class Decoder {
 public:
  Decoder(const std::string& name, const ModelConfig& cfg);
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& z, const ForwardCtx& ctx);
  Tensor backward(const Tensor& d_recon);
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<NamedBuffer*>& out);

 private:
  int c5_, s5_;
  Dense expand_;
  Elu expand_elu_;
  std::vector<ConvTranspose3d> deconvs_;
  std::vector<BatchNorm3d> bns_;
  std::vector<Elu> elus_;
  SigmoidLayer out_sig_;
  int batch_ = 0;
};

class DsmtModel {
 public:
  DsmtModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  ModelOutputs forward(const Tensor& batch, const ForwardCtx& ctx);
  void backward(const OutputGrads& grads);

  std::vector<Param*> params();
  std::vector<NamedBuffer*> buffers();
  void zero_grads();
  std::size_t count_parameters();

 private:
  ModelConfig cfg_;
  std::vector<ResBlock> blocks_;
  GlobalAvgPool3d latent_gap_;
  std::unique_ptr<Dense> latent_fc_;
  std::unique_ptr<BottleneckHead> age_final_;
  std::unique_ptr<BottleneckHead> sex_final_;
  std::map<int, std::unique_ptr<BottleneckHead>> age_shallow_;
  std::map<int, std::unique_ptr<BottleneckHead>> sex_shallow_;
  std::unique_ptr<Decoder> decoder_;
  int last_batch_ = 0;
};

std::size_t count_parameters(DsmtModel& model);

}  // namespace dsmt
