#include "dsmt/model.hpp"

#include <algorithm>
#include <cmath>

#include "dsmt/rng.hpp"

namespace dsmt {

namespace {

constexpr double kProbGuard = 1e-12;

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (side < 2) throw ConfigError("model: side must be >= 2");
  if (in_channels != 1) throw ConfigError("model: in_channels must be 1");
  if (block_channels.size() != 5)
    throw ConfigError("model: exactly 5 encoder blocks required");
  for (int c : block_channels)
    if (c < 1) throw ConfigError("model: block channel counts must be >= 1");
  for (int d : supervision_depths)
    if (d < 1 || d > 4)
      throw ConfigError("model: supervision depths must lie in {1..4}");
  if (has_shallow_heads(variant) && supervision_depths.empty())
    throw ConfigError("model: deep-supervision variant needs depths");
  std::vector<int> sorted = supervision_depths;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("model: duplicate supervision depth");
  if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
  if (head_hidden.size() != 2)
    throw ConfigError("model: heads use exactly two dense layers");
  for (int h : head_hidden)
    if (h < 1) throw ConfigError("model: head widths must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("model: dropout_rate must be in [0,1)");
}

std::vector<int> ModelConfig::encoder_sides() const {
  std::vector<int> sides = {side};
  for (int k = 0; k < 5; ++k) sides.push_back((sides.back() + 1) / 2);
  return sides;
}

std::vector<int> ModelConfig::active_depths() const {
  if (!has_shallow_heads(variant)) return {};
  std::vector<int> d = supervision_depths;
  std::sort(d.begin(), d.end());
  return d;
}

// ---------------------------------------------------------------------------
// ModelOutputs

std::vector<const std::vector<double>*> ModelOutputs::age_preds() const {
  std::vector<const std::vector<double>*> out;
  if (!age_final.empty()) out.push_back(&age_final);
  for (const auto& [d, v] : age_shallow) out.push_back(&v);
  return out;
}

std::vector<const std::vector<double>*> ModelOutputs::sex_probs() const {
  std::vector<const std::vector<double>*> out;
  if (!sex_final.empty()) out.push_back(&sex_final);
  for (const auto& [d, v] : sex_shallow) out.push_back(&v);
  return out;
}

// ---------------------------------------------------------------------------
// ResBlock

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch)
    : conv_(name + ".conv", in_ch, out_ch, 3, 2, 1, /*bias=*/false),
      bn_(name + ".bn", out_ch),
      proj_(name + ".proj", in_ch, out_ch, 1, 2, 0) {}

void ResBlock::init(std::mt19937_64& rng) {
  conv_.init(rng);
  proj_.init(rng);
}

Tensor ResBlock::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor main = bn_.forward(conv_.forward(x, ctx), ctx);
  Tensor skip = proj_.forward(x, ctx);
  add_inplace(main, skip);
  return elu_.forward(main, ctx);
}

Tensor ResBlock::backward(const Tensor& dy) {
  Tensor d_sum = elu_.backward(dy);
  Tensor dx = conv_.backward(bn_.backward(d_sum));
  add_inplace(dx, proj_.backward(d_sum));
  return dx;
}

void ResBlock::collect(std::vector<Param*>& out) {
  conv_.collect(out);
  bn_.collect(out);
  proj_.collect(out);
}

void ResBlock::collect_buffers(std::vector<NamedBuffer*>& out) {
  bn_.collect_buffers(out);
}

// ---------------------------------------------------------------------------
// BottleneckHead

BottleneckHead::BottleneckHead(const std::string& name, int in_features,
                               const std::vector<int>& hidden,
                               double dropout_rate, bool sigmoid_output,
                               bool from_volume)
    : from_volume_(from_volume),
      sigmoid_(sigmoid_output),
      fc1_(name + ".fc1", in_features, hidden.at(0)),
      fc2_(name + ".fc2", hidden.at(0), hidden.at(1)),
      out_(name + ".out", hidden.at(1), 1),
      drop_(name + ".drop", dropout_rate) {}

void BottleneckHead::init(std::mt19937_64& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
  out_.init(rng);
}

std::vector<double> BottleneckHead::forward(const Tensor& input,
                                            const ForwardCtx& ctx) {
  Tensor h = from_volume_ ? gap_.forward(input, ctx) : input;
  h = elu1_.forward(fc1_.forward(h, ctx), ctx);
  h = elu2_.forward(fc2_.forward(h, ctx), ctx);
  h = drop_.forward(h, ctx);
  h = out_.forward(h, ctx);
  if (sigmoid_) h = sig_.forward(h, ctx);
  std::vector<double> out(h.dim(0));
  for (int i = 0; i < h.dim(0); ++i) {
    out[i] = h.at(i, 0);
    if (sigmoid_)
      out[i] = std::clamp(out[i], kProbGuard, 1.0 - kProbGuard);
  }
  return out;
}

Tensor BottleneckHead::backward(const std::vector<double>& d_out) {
  Tensor d({static_cast<int>(d_out.size()), 1});
  for (std::size_t i = 0; i < d_out.size(); ++i) d.at(static_cast<int>(i), 0) = d_out[i];
  if (sigmoid_) d = sig_.backward(d);
  d = out_.backward(d);
  d = drop_.backward(d);
  d = fc2_.backward(elu2_.backward(d));
  d = fc1_.backward(elu1_.backward(d));
  return from_volume_ ? gap_.backward(d) : d;
}

void BottleneckHead::collect(std::vector<Param*>& out) {
  fc1_.collect(out);
  fc2_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(const std::string& name, const ModelConfig& cfg)
    : c5_(cfg.block_channels[4]),
      s5_(cfg.encoder_sides()[5]),
      expand_(name + ".expand", cfg.latent_dim, c5_ * s5_ * s5_ * s5_) {
  const auto sides = cfg.encoder_sides();
  // Stage j maps sides[5-j] -> sides[4-j]; channel chain runs back down to
  // the input channel count.
  std::vector<int> chans = {c5_, cfg.block_channels[3], cfg.block_channels[2],
                            cfg.block_channels[1], cfg.block_channels[0],
                            cfg.in_channels};
  deconvs_.reserve(5);
  for (int j = 0; j < 5; ++j) {
    const int in_side = sides[5 - j];
    const int target = sides[4 - j];
    const int base = ConvTranspose3d::out_size(in_side, 3, 2, 1, 0);
    const int out_pad = target - base;
    if (out_pad < 0 || out_pad > 1)
      throw ConfigError("decoder: unsupported side chain");
    deconvs_.emplace_back(name + ".up" + std::to_string(j + 1), chans[j],
                          chans[j + 1], 3, 2, 1, out_pad, /*bias=*/j == 4);
    if (j < 4) {
      bns_.emplace_back(name + ".bn" + std::to_string(j + 1), chans[j + 1]);
      elus_.emplace_back();
    }
  }
}

void Decoder::init(std::mt19937_64& rng) {
  expand_.init(rng);
  for (auto& d : deconvs_) d.init(rng);
}

Tensor Decoder::forward(const Tensor& z, const ForwardCtx& ctx) {
  batch_ = z.dim(0);
  Tensor h = expand_elu_.forward(expand_.forward(z, ctx), ctx);
  // reshape [N, C5*s5^3] -> [N, C5, s5, s5, s5]
  Tensor vol({batch_, c5_, s5_, s5_, s5_});
  std::copy(h.data(), h.data() + h.numel(), vol.data());
  for (std::size_t j = 0; j < deconvs_.size(); ++j) {
    vol = deconvs_[j].forward(vol, ctx);
    if (j < bns_.size()) {
      vol = bns_[j].forward(vol, ctx);
      vol = elus_[j].forward(vol, ctx);
    }
  }
  return out_sig_.forward(vol, ctx);
}

Tensor Decoder::backward(const Tensor& d_recon) {
  Tensor d = out_sig_.backward(d_recon);
  for (int j = static_cast<int>(deconvs_.size()) - 1; j >= 0; --j) {
    if (j < static_cast<int>(bns_.size()))
      d = bns_[j].backward(elus_[j].backward(d));
    d = deconvs_[j].backward(d);
  }
  Tensor flat({batch_, c5_ * s5_ * s5_ * s5_});
  std::copy(d.data(), d.data() + d.numel(), flat.data());
  return expand_.backward(expand_elu_.backward(flat));
}

void Decoder::collect(std::vector<Param*>& out) {
  expand_.collect(out);
  for (auto& d : deconvs_) d.collect(out);
  for (auto& b : bns_) b.collect(out);
}

void Decoder::collect_buffers(std::vector<NamedBuffer*>& out) {
  for (auto& b : bns_) b.collect_buffers(out);
}

// ---------------------------------------------------------------------------
// DsmtModel

DsmtModel::DsmtModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  auto rng = make_rng(seed, 0x6d6f64656cULL);

  blocks_.reserve(5);
  int in_ch = cfg_.in_channels;
  for (int k = 0; k < 5; ++k) {
    blocks_.emplace_back("enc" + std::to_string(k + 1), in_ch,
                         cfg_.block_channels[k]);
    in_ch = cfg_.block_channels[k];
  }
  latent_fc_ = std::make_unique<Dense>("latent.fc", cfg_.block_channels[4],
                                       cfg_.latent_dim);

  age_final_ = std::make_unique<BottleneckHead>(
      "age_f", cfg_.latent_dim, cfg_.head_hidden, cfg_.dropout_rate,
      /*sigmoid=*/false, /*from_volume=*/false);
  if (has_sex_heads(cfg_.variant))
    sex_final_ = std::make_unique<BottleneckHead>(
        "sex_f", cfg_.latent_dim, cfg_.head_hidden, cfg_.dropout_rate,
        /*sigmoid=*/true, /*from_volume=*/false);

  for (int d : cfg_.active_depths()) {
    const int ch = cfg_.block_channels[d - 1];
    age_shallow_[d] = std::make_unique<BottleneckHead>(
        "age_d" + std::to_string(d), ch, cfg_.head_hidden, cfg_.dropout_rate,
        /*sigmoid=*/false, /*from_volume=*/true);
    if (cfg_.variant == Variant::kDsmtAe)
      sex_shallow_[d] = std::make_unique<BottleneckHead>(
          "sex_d" + std::to_string(d), ch, cfg_.head_hidden,
          cfg_.dropout_rate, /*sigmoid=*/true, /*from_volume=*/true);
  }

  if (has_decoder(cfg_.variant))
    decoder_ = std::make_unique<Decoder>("dec", cfg_);

  // Initialize in a fixed construction order so a seed pins every weight.
  for (auto& b : blocks_) b.init(rng);
  latent_fc_->init(rng);
  age_final_->init(rng);
  if (sex_final_) sex_final_->init(rng);
  for (auto& [d, h] : age_shallow_) h->init(rng);
  for (auto& [d, h] : sex_shallow_) h->init(rng);
  if (decoder_) decoder_->init(rng);
}

ModelOutputs DsmtModel::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.rank() != 5 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.side ||
      x.dim(3) != cfg_.side || x.dim(4) != cfg_.side)
    throw ShapeError("forward: expected [N,1," + std::to_string(cfg_.side) +
                     "^3] input");
  last_batch_ = x.dim(0);

  ModelOutputs out;
  out.batch = last_batch_;

  Tensor h = x;
  std::map<int, Tensor> taps;
  const auto depths = cfg_.active_depths();
  for (int k = 0; k < 5; ++k) {
    h = blocks_[k].forward(h, ctx);
    const int depth = k + 1;
    if (std::find(depths.begin(), depths.end(), depth) != depths.end())
      taps[depth] = h;
  }
  Tensor pooled = latent_gap_.forward(h, ctx);
  out.latent = latent_fc_->forward(pooled, ctx);

  out.age_final = age_final_->forward(out.latent, ctx);
  if (sex_final_) out.sex_final = sex_final_->forward(out.latent, ctx);
  for (const auto& [d, head] : age_shallow_)
    out.age_shallow[d] = head->forward(taps.at(d), ctx);
  for (const auto& [d, head] : sex_shallow_)
    out.sex_shallow[d] = head->forward(taps.at(d), ctx);

  if (decoder_) out.reconstruction = decoder_->forward(out.latent, ctx);
  return out;
}

void DsmtModel::backward(const OutputGrads& g) {
  if (last_batch_ == 0) throw Error("backward without forward");
  const int n = last_batch_;

  Tensor dz({n, cfg_.latent_dim});
  bool any = false;
  if (!g.d_age_final.empty()) {
    add_inplace(dz, age_final_->backward(g.d_age_final));
    any = true;
  }
  if (!g.d_sex_final.empty()) {
    if (!sex_final_) throw ParameterError("backward: no sex head built");
    add_inplace(dz, sex_final_->backward(g.d_sex_final));
    any = true;
  }
  if (!g.d_reconstruction.empty()) {
    if (!decoder_) throw ParameterError("backward: no decoder built");
    add_inplace(dz, decoder_->backward(g.d_reconstruction));
    any = true;
  }

  // Gradient at the output of block 5, through the latent path.
  Tensor dh = latent_gap_.backward(latent_fc_->backward(dz));

  for (int k = 5; k >= 1; --k) {
    if (k < 5) {
      auto ita = g.d_age_shallow.find(k);
      if (ita != g.d_age_shallow.end() && !ita->second.empty()) {
        auto head = age_shallow_.find(k);
        if (head == age_shallow_.end())
          throw ParameterError("backward: no shallow age head at depth " +
                               std::to_string(k));
        add_inplace(dh, head->second->backward(ita->second));
        any = true;
      }
      auto its = g.d_sex_shallow.find(k);
      if (its != g.d_sex_shallow.end() && !its->second.empty()) {
        auto head = sex_shallow_.find(k);
        if (head == sex_shallow_.end())
          throw ParameterError("backward: no shallow sex head at depth " +
                               std::to_string(k));
        add_inplace(dh, head->second->backward(its->second));
        any = true;
      }
    }
    dh = blocks_[k - 1].backward(dh);
  }
  if (!any) throw ParameterError("backward: no output gradients supplied");
}

std::vector<Param*> DsmtModel::params() {
  std::vector<Param*> out;
  for (auto& b : blocks_) b.collect(out);
  latent_fc_->collect(out);
  age_final_->collect(out);
  if (sex_final_) sex_final_->collect(out);
  for (auto& [d, h] : age_shallow_) h->collect(out);
  for (auto& [d, h] : sex_shallow_) h->collect(out);
  if (decoder_) decoder_->collect(out);
  return out;
}

std::vector<NamedBuffer*> DsmtModel::buffers() {
  std::vector<NamedBuffer*> out;
  for (auto& b : blocks_) b.collect_buffers(out);
  if (decoder_) decoder_->collect_buffers(out);
  return out;
}

void DsmtModel::zero_grads() {
  for (auto* p : params()) p->zero_grad();
}

std::size_t DsmtModel::count_parameters() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->value.numel();
  return n;
}

std::size_t count_parameters(DsmtModel& model) {
  return model.count_parameters();
}

}  // namespace dsmt
