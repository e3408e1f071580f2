#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

// Per-call forward context. Training mode caches activations for backward
// and lets batch-norm use batch statistics; update_running_stats separates
// "statistics maintenance" from "differentiable training forward" so
// finite-difference probes do not mutate the model.
struct ForwardCtx {
  bool training = false;
  bool update_running_stats = false;
  bool dropout_enabled = true;  // gradient probes run training-mode without it
  std::uint64_t dropout_seed = 0;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    grad.zero();
  }
};

// Non-trainable named state (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  Tensor value;
};

// Uniform fan-in-scaled initialization, U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
void init_fan_in(Tensor& w, int fan_in, std::mt19937_64& rng);

// 3D convolution, NCDHW layout. Bias is omitted when a batch norm follows
// (the norm's shift makes it redundant).
class Conv3d {
 public:
  Conv3d(std::string name, int in_ch, int out_ch, int kernel, int stride,
         int pad, bool bias = true);
  void init(std::mt19937_64& rng);
  static int out_size(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
  }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    if (has_bias_) out.push_back(&b);
  }

  Param w;  // [out_ch, in_ch, k, k, k]
  Param b;  // [out_ch]

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  bool has_bias_;
  Tensor x_cache_;
};

// 3D transposed convolution with explicit output padding so every encoder
// side length can be inverted exactly.
class ConvTranspose3d {
 public:
  ConvTranspose3d(std::string name, int in_ch, int out_ch, int kernel,
                  int stride, int pad, int out_pad, bool bias = true);
  void init(std::mt19937_64& rng);
  static int out_size(int in, int kernel, int stride, int pad, int out_pad) {
    return (in - 1) * stride - 2 * pad + kernel + out_pad;
  }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    if (has_bias_) out.push_back(&b);
  }

  Param w;  // [in_ch, out_ch, k, k, k]
  Param b;  // [out_ch]

 private:
  int in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
  bool has_bias_;
  Tensor x_cache_;
};

class BatchNorm3d {
 public:
  explicit BatchNorm3d(std::string name, int channels, double eps = 1e-5,
                       double momentum = 0.1);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_buffers(std::vector<NamedBuffer*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }

  Param gamma, beta;
  NamedBuffer running_mean, running_var;

 private:
  int channels_;
  double eps_, momentum_;
  Tensor xhat_cache_;
  std::vector<double> istd_cache_;
};

class Dense {
 public:
  Dense(std::string name, int in, int out);
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);  // [N,in]->[N,out]
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }

  Param w;  // [out, in]
  Param b;  // [out]

 private:
  int in_, out_;
  Tensor x_cache_;
};

class Elu {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_cache_;
};

class SigmoidLayer {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_cache_;
};

// [N,C,D,H,W] -> [N,C] mean pooling.
class GlobalAvgPool3d {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);

 private:
  std::vector<int> x_shape_;
};

// Inverted dropout; identity outside training. Mask stream is derived from
// (ctx.dropout_seed, name hash) so runs are schedule-independent.
class Dropout {
 public:
  Dropout(std::string name, double rate);
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& dy);

 private:
  double rate_;
  std::uint64_t salt_;
  Tensor mask_;
  bool active_ = false;
};

}  // namespace dsmt
