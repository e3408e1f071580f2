#pragma once

// Central finite-difference checking utilities shared by the layer and
// model gradient tests.

#include <cmath>
#include <functional>
#include <random>

#include "dsmt/layers.hpp"
#include "dsmt/tensor.hpp"

namespace gradcheck {

inline double dot(const dsmt::Tensor& a, const dsmt::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

inline void fill_uniform(dsmt::Tensor& t, std::mt19937_64& rng, double lo,
                         double hi) {
  std::uniform_real_distribution<double> uni(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uni(rng);
}

inline double rel_error(double analytic, double numeric,
                        double guard = 1e-8) {
  const double denom =
      std::max({std::fabs(analytic), std::fabs(numeric), guard});
  return std::fabs(analytic - numeric) / denom;
}

// Central difference of `loss` with respect to *slot.
inline double numeric_grad(double* slot, const std::function<double()>& loss,
                           double h = 1e-5) {
  const double orig = *slot;
  *slot = orig + h;
  const double lp = loss();
  *slot = orig - h;
  const double lm = loss();
  *slot = orig;
  return (lp - lm) / (2.0 * h);
}

// Checks every coordinate of `analytic` (gradient w.r.t. the tensor that
// `slot_of` addresses) against central differences; returns max rel error.
inline double check_tensor_grad(dsmt::Tensor& target,
                                const dsmt::Tensor& analytic,
                                const std::function<double()>& loss,
                                std::mt19937_64& rng, int samples,
                                double h = 1e-5) {
  double worst = 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, target.numel() - 1);
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = pick(rng);
    const double num = numeric_grad(&target[i], loss, h);
    worst = std::max(worst, rel_error(analytic[i], num));
  }
  return worst;
}

}  // namespace gradcheck
