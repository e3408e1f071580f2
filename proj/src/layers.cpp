#include "dsmt/layers.hpp"

#include <cmath>
#include <functional>

#include "dsmt/rng.hpp"

namespace dsmt {

void init_fan_in(Tensor& w, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = uni(rng);
}

namespace {

void require_ncdhw(const Tensor& x, int channels, const char* what) {
  if (x.rank() != 5) throw ShapeError(std::string(what) + ": expected rank-5");
  if (x.dim(1) != channels)
    throw ShapeError(std::string(what) + ": channel mismatch");
}

std::size_t spatial_numel(const Tensor& x) {
  return static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(std::string name, int in_ch, int out_ch, int kernel, int stride,
               int pad, bool bias)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  w.name = name + ".w";
  w.value = Tensor({out_ch, in_ch, kernel, kernel, kernel});
  if (has_bias_) {
    b.name = name + ".b";
    b.value = Tensor({out_ch});
  }
}

void Conv3d::init(std::mt19937_64& rng) {
  init_fan_in(w.value, in_ch_ * k_ * k_ * k_, rng);
  if (has_bias_) b.value.zero();
}

Tensor Conv3d::forward(const Tensor& x, const ForwardCtx& ctx) {
  require_ncdhw(x, in_ch_, "Conv3d");
  const int n = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
  const int od = out_size(id, k_, stride_, pad_);
  const int oh = out_size(ih, k_, stride_, pad_);
  const int ow = out_size(iw, k_, stride_, pad_);
  if (od <= 0 || oh <= 0 || ow <= 0)
    throw ShapeError("Conv3d: input too small");
  Tensor y({n, out_ch_, od, oh, ow});

  const double* px = x.data();
  const double* pw = w.value.data();
  double* py = y.data();
  const std::size_t x_c = static_cast<std::size_t>(id) * ih * iw;
  const std::size_t x_n = x_c * in_ch_;
  const std::size_t y_c = static_cast<std::size_t>(od) * oh * ow;
  const std::size_t y_n = y_c * out_ch_;
  const std::size_t w_ci = static_cast<std::size_t>(k_) * k_ * k_;
  const std::size_t w_co = w_ci * in_ch_;

#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < out_ch_; ++co) {
      double* yb = py + ni * y_n + co * y_c;
      const double bias = has_bias_ ? b.value[co] : 0.0;
      for (std::size_t i = 0; i < y_c; ++i) yb[i] = bias;
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xb = px + ni * x_n + ci * x_c;
        const double* wb = pw + co * w_co + ci * w_ci;
        for (int zo = 0; zo < od; ++zo) {
          const int z0 = zo * stride_ - pad_;
          for (int yo = 0; yo < oh; ++yo) {
            const int y0 = yo * stride_ - pad_;
            for (int xo = 0; xo < ow; ++xo) {
              const int x0 = xo * stride_ - pad_;
              double acc = 0.0;
              for (int kz = 0; kz < k_; ++kz) {
                const int z = z0 + kz;
                if (z < 0 || z >= id) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yy = y0 + ky;
                  if (yy < 0 || yy >= ih) continue;
                  const double* xrow =
                      xb + (static_cast<std::size_t>(z) * ih + yy) * iw;
                  const double* wrow = wb + (kz * k_ + ky) * k_;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xx = x0 + kx;
                    if (xx < 0 || xx >= iw) continue;
                    acc += xrow[xx] * wrow[kx];
                  }
                }
              }
              yb[(static_cast<std::size_t>(zo) * oh + yo) * ow + xo] += acc;
            }
          }
        }
      }
    }

  if (ctx.training) x_cache_ = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& dy) {
  if (x_cache_.empty()) throw Error("Conv3d::backward without forward");
  const Tensor& x = x_cache_;
  const int n = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
  const int od = dy.dim(2), oh = dy.dim(3), ow = dy.dim(4);

  if (!w.grad.same_shape(w.value)) w.zero_grad();
  if (has_bias_ && !b.grad.same_shape(b.value)) b.zero_grad();
  Tensor dx(x.shape());

  const double* px = x.data();
  const double* pdy = dy.data();
  const double* pw = w.value.data();
  double* pdx = dx.data();
  double* pdw = w.grad.data();
  const std::size_t x_c = static_cast<std::size_t>(id) * ih * iw;
  const std::size_t x_n = x_c * in_ch_;
  const std::size_t y_c = static_cast<std::size_t>(od) * oh * ow;
  const std::size_t y_n = y_c * out_ch_;
  const std::size_t w_ci = static_cast<std::size_t>(k_) * k_ * k_;
  const std::size_t w_co = w_ci * in_ch_;

  // dW and db: one thread owns one output channel, accumulating over the
  // batch in a fixed order (deterministic for any thread count).
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_ch_; ++co) {
    double dbias = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const double* dyb = pdy + ni * y_n + co * y_c;
      if (has_bias_)
        for (std::size_t i = 0; i < y_c; ++i) dbias += dyb[i];
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xb = px + ni * x_n + ci * x_c;
        double* dwb = pdw + co * w_co + ci * w_ci;
        for (int zo = 0; zo < od; ++zo) {
          const int z0 = zo * stride_ - pad_;
          for (int yo = 0; yo < oh; ++yo) {
            const int y0 = yo * stride_ - pad_;
            for (int xo = 0; xo < ow; ++xo) {
              const int x0 = xo * stride_ - pad_;
              const double g =
                  dyb[(static_cast<std::size_t>(zo) * oh + yo) * ow + xo];
              if (g == 0.0) continue;
              for (int kz = 0; kz < k_; ++kz) {
                const int z = z0 + kz;
                if (z < 0 || z >= id) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yy = y0 + ky;
                  if (yy < 0 || yy >= ih) continue;
                  const double* xrow =
                      xb + (static_cast<std::size_t>(z) * ih + yy) * iw;
                  double* dwrow = dwb + (kz * k_ + ky) * k_;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xx = x0 + kx;
                    if (xx < 0 || xx >= iw) continue;
                    dwrow[kx] += g * xrow[xx];
                  }
                }
              }
            }
          }
        }
      }
    }
    if (has_bias_) b.grad[co] += dbias;
  }

  // dX as a gather per input element's owning (n, ci) slab.
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < in_ch_; ++ci) {
      double* dxb = pdx + ni * x_n + ci * x_c;
      for (int co = 0; co < out_ch_; ++co) {
        const double* dyb = pdy + ni * y_n + co * y_c;
        const double* wb = pw + co * w_co + ci * w_ci;
        for (int zo = 0; zo < od; ++zo) {
          const int z0 = zo * stride_ - pad_;
          for (int yo = 0; yo < oh; ++yo) {
            const int y0 = yo * stride_ - pad_;
            for (int xo = 0; xo < ow; ++xo) {
              const int x0 = xo * stride_ - pad_;
              const double g =
                  dyb[(static_cast<std::size_t>(zo) * oh + yo) * ow + xo];
              if (g == 0.0) continue;
              for (int kz = 0; kz < k_; ++kz) {
                const int z = z0 + kz;
                if (z < 0 || z >= id) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yy = y0 + ky;
                  if (yy < 0 || yy >= ih) continue;
                  double* dxrow =
                      dxb + (static_cast<std::size_t>(z) * ih + yy) * iw;
                  const double* wrow = wb + (kz * k_ + ky) * k_;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xx = x0 + kx;
                    if (xx < 0 || xx >= iw) continue;
                    dxrow[xx] += g * wrow[kx];
                  }
                }
              }
            }
          }
        }
      }
    }

  return dx;
}

// ---------------------------------------------------------------------------
// ConvTranspose3d

ConvTranspose3d::ConvTranspose3d(std::string name, int in_ch, int out_ch,
                                 int kernel, int stride, int pad, int out_pad,
                                 bool bias)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      out_pad_(out_pad),
      has_bias_(bias) {
  w.name = name + ".w";
  w.value = Tensor({in_ch, out_ch, kernel, kernel, kernel});
  if (has_bias_) {
    b.name = name + ".b";
    b.value = Tensor({out_ch});
  }
}

void ConvTranspose3d::init(std::mt19937_64& rng) {
  init_fan_in(w.value, in_ch_ * k_ * k_ * k_, rng);
  if (has_bias_) b.value.zero();
}

Tensor ConvTranspose3d::forward(const Tensor& x, const ForwardCtx& ctx) {
  require_ncdhw(x, in_ch_, "ConvTranspose3d");
  const int n = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
  const int od = out_size(id, k_, stride_, pad_, out_pad_);
  const int oh = out_size(ih, k_, stride_, pad_, out_pad_);
  const int ow = out_size(iw, k_, stride_, pad_, out_pad_);
  if (od <= 0 || oh <= 0 || ow <= 0)
    throw ShapeError("ConvTranspose3d: degenerate output");
  Tensor y({n, out_ch_, od, oh, ow});

  const double* px = x.data();
  const double* pw = w.value.data();
  double* py = y.data();
  const std::size_t x_c = static_cast<std::size_t>(id) * ih * iw;
  const std::size_t x_n = x_c * in_ch_;
  const std::size_t y_c = static_cast<std::size_t>(od) * oh * ow;
  const std::size_t y_n = y_c * out_ch_;
  const std::size_t w_co = static_cast<std::size_t>(k_) * k_ * k_;
  const std::size_t w_ci = w_co * out_ch_;

  // Gather form: out[od] sums x[(od + pad - kd) / stride] over kernel taps
  // that land on integer input coordinates.
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < out_ch_; ++co) {
      double* yb = py + ni * y_n + co * y_c;
      const double bias = has_bias_ ? b.value[co] : 0.0;
      for (std::size_t i = 0; i < y_c; ++i) yb[i] = bias;
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xb = px + ni * x_n + ci * x_c;
        const double* wb = pw + ci * w_ci + co * w_co;
        for (int zo = 0; zo < od; ++zo)
          for (int yo = 0; yo < oh; ++yo)
            for (int xo = 0; xo < ow; ++xo) {
              double acc = 0.0;
              for (int kz = 0; kz < k_; ++kz) {
                const int zn = zo + pad_ - kz;
                if (zn < 0 || zn % stride_ != 0) continue;
                const int z = zn / stride_;
                if (z >= id) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yn = yo + pad_ - ky;
                  if (yn < 0 || yn % stride_ != 0) continue;
                  const int yy = yn / stride_;
                  if (yy >= ih) continue;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xn = xo + pad_ - kx;
                    if (xn < 0 || xn % stride_ != 0) continue;
                    const int xx = xn / stride_;
                    if (xx >= iw) continue;
                    acc += xb[(static_cast<std::size_t>(z) * ih + yy) * iw +
                              xx] *
                           wb[(kz * k_ + ky) * k_ + kx];
                  }
                }
              }
              yb[(static_cast<std::size_t>(zo) * oh + yo) * ow + xo] += acc;
            }
      }
    }

  if (ctx.training) x_cache_ = x;
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& dy) {
  if (x_cache_.empty()) throw Error("ConvTranspose3d::backward without forward");
  const Tensor& x = x_cache_;
  const int n = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
  const int od = dy.dim(2), oh = dy.dim(3), ow = dy.dim(4);

  if (!w.grad.same_shape(w.value)) w.zero_grad();
  if (has_bias_ && !b.grad.same_shape(b.value)) b.zero_grad();
  Tensor dx(x.shape());

  const double* px = x.data();
  const double* pdy = dy.data();
  const double* pw = w.value.data();
  double* pdx = dx.data();
  double* pdw = w.grad.data();
  const std::size_t x_c = static_cast<std::size_t>(id) * ih * iw;
  const std::size_t x_n = x_c * in_ch_;
  const std::size_t y_c = static_cast<std::size_t>(od) * oh * ow;
  const std::size_t y_n = y_c * out_ch_;
  const std::size_t w_co = static_cast<std::size_t>(k_) * k_ * k_;
  const std::size_t w_ci = w_co * out_ch_;

  // db: one thread per output channel.
  if (has_bias_) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_ch_; ++co) {
      double acc = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* dyb = pdy + ni * y_n + co * y_c;
        for (std::size_t i = 0; i < y_c; ++i) acc += dyb[i];
      }
      b.grad[co] += acc;
    }
  }

  // dX is an ordinary convolution of dy with the kernel (scatter inverted
  // back to a gather over output positions touched by each input element).
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < in_ch_; ++ci) {
      double* dxb = pdx + ni * x_n + ci * x_c;
      for (int co = 0; co < out_ch_; ++co) {
        const double* dyb = pdy + ni * y_n + co * y_c;
        const double* wb = pw + ci * w_ci + co * w_co;
        for (int z = 0; z < id; ++z)
          for (int yy = 0; yy < ih; ++yy)
            for (int xx = 0; xx < iw; ++xx) {
              double acc = 0.0;
              for (int kz = 0; kz < k_; ++kz) {
                const int zo = z * stride_ - pad_ + kz;
                if (zo < 0 || zo >= od) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yo = yy * stride_ - pad_ + ky;
                  if (yo < 0 || yo >= oh) continue;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xo = xx * stride_ - pad_ + kx;
                    if (xo < 0 || xo >= ow) continue;
                    acc += dyb[(static_cast<std::size_t>(zo) * oh + yo) * ow +
                               xo] *
                           wb[(kz * k_ + ky) * k_ + kx];
                  }
                }
              }
              dxb[(static_cast<std::size_t>(z) * ih + yy) * iw + xx] += acc;
            }
      }
    }

  // dW: one thread owns an input-channel slab.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < in_ch_; ++ci) {
    for (int ni = 0; ni < n; ++ni) {
      const double* xb = px + ni * x_n + ci * x_c;
      for (int co = 0; co < out_ch_; ++co) {
        const double* dyb = pdy + ni * y_n + co * y_c;
        double* dwb = pdw + ci * w_ci + co * w_co;
        for (int z = 0; z < id; ++z)
          for (int yy = 0; yy < ih; ++yy)
            for (int xx = 0; xx < iw; ++xx) {
              const double xv =
                  xb[(static_cast<std::size_t>(z) * ih + yy) * iw + xx];
              if (xv == 0.0) continue;
              for (int kz = 0; kz < k_; ++kz) {
                const int zo = z * stride_ - pad_ + kz;
                if (zo < 0 || zo >= od) continue;
                for (int ky = 0; ky < k_; ++ky) {
                  const int yo = yy * stride_ - pad_ + ky;
                  if (yo < 0 || yo >= oh) continue;
                  for (int kx = 0; kx < k_; ++kx) {
                    const int xo = xx * stride_ - pad_ + kx;
                    if (xo < 0 || xo >= ow) continue;
                    dwb[(kz * k_ + ky) * k_ + kx] +=
                        xv * dyb[(static_cast<std::size_t>(zo) * oh + yo) *
                                     ow +
                                 xo];
                  }
                }
              }
            }
      }
    }
  }

  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm3d

BatchNorm3d::BatchNorm3d(std::string name, int channels, double eps,
                         double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma.name = name + ".gamma";
  gamma.value = Tensor({channels}, 1.0);
  beta.name = name + ".beta";
  beta.value = Tensor({channels});
  running_mean.name = name + ".running_mean";
  running_mean.value = Tensor({channels});
  running_var.name = name + ".running_var";
  running_var.value = Tensor({channels}, 1.0);
}

Tensor BatchNorm3d::forward(const Tensor& x, const ForwardCtx& ctx) {
  require_ncdhw(x, channels_, "BatchNorm3d");
  const int n = x.dim(0);
  const std::size_t sp = spatial_numel(x);
  const std::size_t x_c = sp;
  const std::size_t x_n = sp * channels_;
  const double m = static_cast<double>(n) * static_cast<double>(sp);

  Tensor y(x.shape());
  const double* px = x.data();
  double* py = y.data();

  if (ctx.training) {
    xhat_cache_ = Tensor(x.shape());
    istd_cache_.assign(channels_, 0.0);
    double* ph = xhat_cache_.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
      double mean = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* xb = px + ni * x_n + c * x_c;
        for (std::size_t i = 0; i < sp; ++i) mean += xb[i];
      }
      mean /= m;
      double var = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const double* xb = px + ni * x_n + c * x_c;
        for (std::size_t i = 0; i < sp; ++i) {
          const double d = xb[i] - mean;
          var += d * d;
        }
      }
      var /= m;
      const double istd = 1.0 / std::sqrt(var + eps_);
      istd_cache_[c] = istd;
      const double g = gamma.value[c], be = beta.value[c];
      for (int ni = 0; ni < n; ++ni) {
        const double* xb = px + ni * x_n + c * x_c;
        double* hb = ph + ni * x_n + c * x_c;
        double* yb = py + ni * x_n + c * x_c;
        for (std::size_t i = 0; i < sp; ++i) {
          const double h = (xb[i] - mean) * istd;
          hb[i] = h;
          yb[i] = g * h + be;
        }
      }
      if (ctx.update_running_stats) {
        running_mean.value[c] =
            (1.0 - momentum_) * running_mean.value[c] + momentum_ * mean;
        running_var.value[c] =
            (1.0 - momentum_) * running_var.value[c] + momentum_ * var;
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
      const double istd = 1.0 / std::sqrt(running_var.value[c] + eps_);
      const double mean = running_mean.value[c];
      const double g = gamma.value[c], be = beta.value[c];
      for (int ni = 0; ni < n; ++ni) {
        const double* xb = px + ni * x_n + c * x_c;
        double* yb = py + ni * x_n + c * x_c;
        for (std::size_t i = 0; i < sp; ++i)
          yb[i] = g * (xb[i] - mean) * istd + be;
      }
    }
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& dy) {
  if (xhat_cache_.empty())
    throw Error("BatchNorm3d::backward without training forward");
  const Tensor& xhat = xhat_cache_;
  const int n = dy.dim(0);
  const std::size_t sp = spatial_numel(dy);
  const std::size_t x_c = sp;
  const std::size_t x_n = sp * channels_;
  const double m = static_cast<double>(n) * static_cast<double>(sp);

  if (!gamma.grad.same_shape(gamma.value)) gamma.zero_grad();
  if (!beta.grad.same_shape(beta.value)) beta.zero_grad();
  Tensor dx(dy.shape());

  const double* pdy = dy.data();
  const double* ph = xhat.data();
  double* pdx = dx.data();

#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_h = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const double* dyb = pdy + ni * x_n + c * x_c;
      const double* hb = ph + ni * x_n + c * x_c;
      for (std::size_t i = 0; i < sp; ++i) {
        sum_dy += dyb[i];
        sum_dy_h += dyb[i] * hb[i];
      }
    }
    gamma.grad[c] += sum_dy_h;
    beta.grad[c] += sum_dy;
    const double g_istd = gamma.value[c] * istd_cache_[c];
    const double mean_dy = sum_dy / m;
    const double mean_dy_h = sum_dy_h / m;
    for (int ni = 0; ni < n; ++ni) {
      const double* dyb = pdy + ni * x_n + c * x_c;
      const double* hb = ph + ni * x_n + c * x_c;
      double* dxb = pdx + ni * x_n + c * x_c;
      for (std::size_t i = 0; i < sp; ++i)
        dxb[i] = g_istd * (dyb[i] - mean_dy - hb[i] * mean_dy_h);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::string name, int in, int out) : in_(in), out_(out) {
  w.name = name + ".w";
  w.value = Tensor({out, in});
  b.name = name + ".b";
  b.value = Tensor({out});
}

void Dense::init(std::mt19937_64& rng) {
  init_fan_in(w.value, in_, rng);
  b.value.zero();
}

Tensor Dense::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError("Dense: expected [N," + std::to_string(in_) + "]");
  const int n = x.dim(0);
  Tensor y({n, out_});
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < out_; ++o) {
      double acc = b.value[o];
      const double* xr = x.data() + static_cast<std::size_t>(ni) * in_;
      const double* wr = w.value.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) acc += xr[i] * wr[i];
      y.at(ni, o) = acc;
    }
  if (ctx.training) x_cache_ = x;
  return y;
}

Tensor Dense::backward(const Tensor& dy) {
  if (x_cache_.empty()) throw Error("Dense::backward without forward");
  const Tensor& x = x_cache_;
  const int n = x.dim(0);
  if (!w.grad.same_shape(w.value)) w.zero_grad();
  if (!b.grad.same_shape(b.value)) b.zero_grad();
  Tensor dx({n, in_});

#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_; ++o) {
    double dbias = 0.0;
    double* dwr = w.grad.data() + static_cast<std::size_t>(o) * in_;
    for (int ni = 0; ni < n; ++ni) {
      const double g = dy.at(ni, o);
      dbias += g;
      const double* xr = x.data() + static_cast<std::size_t>(ni) * in_;
      for (int i = 0; i < in_; ++i) dwr[i] += g * xr[i];
    }
    b.grad[o] += dbias;
  }

#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    double* dxr = dx.data() + static_cast<std::size_t>(ni) * in_;
    for (int o = 0; o < out_; ++o) {
      const double g = dy.at(ni, o);
      const double* wr = w.value.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) dxr[i] += g * wr[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Activations

Tensor Elu::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
  if (ctx.training) y_cache_ = y;
  return y;
}

Tensor Elu::backward(const Tensor& dy) {
  if (y_cache_.empty()) throw Error("Elu::backward without forward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) {
    const double y = y_cache_[i];
    dx[i] = dy[i] * (y > 0.0 ? 1.0 : y + 1.0);
  }
  return dx;
}

Tensor SigmoidLayer::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  if (ctx.training) y_cache_ = y;
  return y;
}

Tensor SigmoidLayer::backward(const Tensor& dy) {
  if (y_cache_.empty()) throw Error("SigmoidLayer::backward without forward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) {
    const double y = y_cache_[i];
    dx[i] = dy[i] * y * (1.0 - y);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool3d

Tensor GlobalAvgPool3d::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.rank() != 5) throw ShapeError("GlobalAvgPool3d: expected rank-5");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t sp = spatial_numel(x);
  Tensor y({n, c});
  const double inv = 1.0 / static_cast<double>(sp);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* xb =
          x.data() + (static_cast<std::size_t>(ni) * c + ci) * sp;
      double acc = 0.0;
      for (std::size_t i = 0; i < sp; ++i) acc += xb[i];
      y.at(ni, ci) = acc * inv;
    }
  if (ctx.training) x_shape_ = x.shape();
  return y;
}

Tensor GlobalAvgPool3d::backward(const Tensor& dy) {
  if (x_shape_.empty()) throw Error("GlobalAvgPool3d::backward without forward");
  Tensor dx(x_shape_);
  const int n = x_shape_[0], c = x_shape_[1];
  const std::size_t sp = static_cast<std::size_t>(x_shape_[2]) * x_shape_[3] *
                         x_shape_[4];
  const double inv = 1.0 / static_cast<double>(sp);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double g = dy.at(ni, ci) * inv;
      double* dxb =
          dx.data() + (static_cast<std::size_t>(ni) * c + ci) * sp;
      for (std::size_t i = 0; i < sp; ++i) dxb[i] = g;
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(std::string name, double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParameterError("Dropout rate must be in [0,1)");
  salt_ = std::hash<std::string>{}(name);
}

Tensor Dropout::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (!ctx.training || !ctx.dropout_enabled || rate_ == 0.0) {
    active_ = false;
    return x;
  }
  active_ = true;
  mask_ = Tensor(x.shape());
  auto rng = make_rng(ctx.dropout_seed, salt_);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double scale = 1.0 / (1.0 - rate_);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    mask_[i] = uni(rng) < rate_ ? 0.0 : scale;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& dy) {
  if (!active_) return dy;
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

}  // namespace dsmt
