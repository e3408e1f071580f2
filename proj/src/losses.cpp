#include "dsmt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dsmt {

namespace {

void require_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0) || !std::isfinite(v))
    throw ParameterError(std::string("loss weight ") + name +
                         " outside [0,1]");
}

}  // namespace

void LossWeights::validate(const std::vector<int>& depths) const {
  require_unit_interval(alpha, "alpha");
  require_unit_interval(beta, "beta");
  require_unit_interval(gamma, "gamma");
  if (depths.empty()) return;
  double sum = 0.0;
  for (int d : depths) {
    auto it = eta.find(d);
    if (it == eta.end())
      throw ParameterError("eta missing entry for depth " + std::to_string(d));
    if (!(it->second >= 0.0) || !std::isfinite(it->second))
      throw ParameterError("eta weight negative or non-finite");
    sum += it->second;
  }
  if (eta.size() != depths.size())
    throw ParameterError("eta has entries for unknown depths");
  if (std::abs(sum - 1.0) > 1e-9)
    throw ParameterError("eta weights must sum to 1");
}

double reconstruction_loss(const Tensor& x, const Tensor& xhat, Tensor* dxhat) {
  require_same_shape(x, xhat, "reconstruction_loss");
  if (x.empty()) throw ParameterError("reconstruction_loss: empty input");
  const std::size_t n = x.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  const double* px = x.data();
  const double* ph = xhat.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double e = px[i] - ph[i];
    acc += e * e;
  }
  if (dxhat) {
    *dxhat = Tensor(x.shape());
    double* pd = dxhat->data();
    for (std::size_t i = 0; i < n; ++i)
      pd[i] = 2.0 * (ph[i] - px[i]) * inv_n;
  }
  return acc * inv_n;
}

double age_loss(const std::vector<double>& y, const std::vector<double>& yhat,
                std::vector<double>* dyhat) {
  if (y.empty()) throw ParameterError("age_loss: empty batch");
  if (y.size() != yhat.size()) throw ShapeError("age_loss: length mismatch");
  const double inv_n = 1.0 / static_cast<double>(y.size());
  double acc = 0.0;
  if (dyhat) dyhat->assign(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    acc += std::abs(e);
    if (dyhat) (*dyhat)[i] = e > 0.0 ? -inv_n : (e < 0.0 ? inv_n : 0.0);
  }
  return acc * inv_n;
}

double sex_loss(const std::vector<double>& y, const std::vector<double>& phat,
                std::vector<double>* dphat) {
  if (y.empty()) throw ParameterError("sex_loss: empty batch");
  if (y.size() != phat.size()) throw ShapeError("sex_loss: length mismatch");
  const double inv_n = 1.0 / static_cast<double>(y.size());
  double acc = 0.0;
  if (dphat) dphat->assign(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool clamped = phat[i] < kProbEps || phat[i] > 1.0 - kProbEps;
    const double p = std::clamp(phat[i], kProbEps, 1.0 - kProbEps);
    acc += -(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    if (dphat && !clamped)
      (*dphat)[i] = (-y[i] / p + (1.0 - y[i]) / (1.0 - p)) * inv_n;
  }
  return acc * inv_n;
}

double ds_combine(double final_loss, const std::map<int, double>& shallow,
                  double gamma, const std::map<int, double>& eta) {
  require_unit_interval(gamma, "gamma");
  if (shallow.size() != eta.size())
    throw ParameterError("ds_combine: eta/shallow key mismatch");
  double weighted = 0.0;
  for (const auto& [d, loss] : shallow) {
    auto it = eta.find(d);
    if (it == eta.end())
      throw ParameterError("ds_combine: eta missing depth " +
                           std::to_string(d));
    weighted += it->second * loss;
  }
  return gamma * final_loss + (1.0 - gamma) * weighted;
}

LossTermCoefficients loss_coefficients(const LossWeights& w, Variant variant,
                                       const std::vector<int>& depths) {
  w.validate(has_shallow_heads(variant) ? depths : std::vector<int>{});
  LossTermCoefficients c;
  const double a = w.alpha;
  const double b = w.beta;
  const double g = w.gamma;
  switch (variant) {
    case Variant::kBaseline:
      // Pure age regression; the other weight mass collapses onto L_BA.
      c.ba_final = 1.0;
      break;
    case Variant::kAe:
      c.ae = a;
      c.ba_final = 1.0 - a;
      break;
    case Variant::kMtlAe:
      // No shallow heads: gamma is effectively 1.
      c.ae = a;
      c.ba_final = (1.0 - a) * b;
      c.gc_final = (1.0 - a) * (1.0 - b);
      break;
    case Variant::kDsAe:
      // No sex task: beta is effectively 1.
      c.ae = a;
      c.ba_final = (1.0 - a) * g;
      for (int d : depths) c.ba_shallow[d] = (1.0 - a) * (1.0 - g) * w.eta.at(d);
      break;
    case Variant::kDsmtAe:
      c.ae = a;
      c.ba_final = (1.0 - a) * b * g;
      c.gc_final = (1.0 - a) * (1.0 - b) * g;
      for (int d : depths) {
        c.ba_shallow[d] = (1.0 - a) * b * (1.0 - g) * w.eta.at(d);
        c.gc_shallow[d] = (1.0 - a) * (1.0 - b) * (1.0 - g) * w.eta.at(d);
      }
      break;
  }
  return c;
}

LossBreakdown total_loss(const LossComponents& c, const LossWeights& w,
                         Variant variant) {
  std::vector<int> depths;
  for (const auto& [d, _] : c.l_ba_shallow) depths.push_back(d);
  w.validate(has_shallow_heads(variant) ? depths : std::vector<int>{});

  LossBreakdown b;
  b.l_ae = has_decoder(variant) ? c.l_ae : 0.0;
  b.l_ba_final = c.l_ba_final;
  if (has_shallow_heads(variant)) {
    b.l_ba_shallow = c.l_ba_shallow;
    b.l_ba = ds_combine(c.l_ba_final, c.l_ba_shallow, w.gamma, w.eta);
  } else {
    b.l_ba = c.l_ba_final;
  }
  if (has_sex_heads(variant)) {
    b.l_gc_final = c.l_gc_final;
    if (variant == Variant::kDsmtAe) {
      b.l_gc_shallow = c.l_gc_shallow;
      b.l_gc = ds_combine(c.l_gc_final, c.l_gc_shallow, w.gamma, w.eta);
    } else {
      b.l_gc = c.l_gc_final;
    }
  }

  switch (variant) {
    case Variant::kBaseline:
      b.l_dst = b.l_ba;
      b.l_total = b.l_ba;
      break;
    case Variant::kAe:
    case Variant::kDsAe:
      b.l_dst = b.l_ba;
      b.l_total = w.alpha * b.l_ae + (1.0 - w.alpha) * b.l_dst;
      break;
    case Variant::kMtlAe:
    case Variant::kDsmtAe:
      b.l_dst = w.beta * b.l_ba + (1.0 - w.beta) * b.l_gc;
      b.l_total = w.alpha * b.l_ae + (1.0 - w.alpha) * b.l_dst;
      break;
  }
  return b;
}

}  // namespace dsmt
