#pragma once

#include <map>
#include <vector>

#include "dsmt/tensor.hpp"
#include "dsmt/variant.hpp"

namespace dsmt {

// Probability clamp for the binary cross-entropy terms.
inline constexpr double kProbEps = 1e-7;

// Mixing weights of the composite objective. eta holds one weight per
// supervised intermediate depth and must sum to 1.
struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.5;
  std::map<int, double> eta;

  void validate(const std::vector<int>& depths) const;
};

// Every term of one loss evaluation, so logs and tests can recompose the
// total from its parts.
struct LossBreakdown {
  double l_ae = 0.0;
  double l_ba_final = 0.0;
  std::map<int, double> l_ba_shallow;
  double l_gc_final = 0.0;
  std::map<int, double> l_gc_shallow;
  double l_ba = 0.0;
  double l_gc = 0.0;
  double l_dst = 0.0;
  double l_total = 0.0;
};

// Raw per-head losses from one forward pass; the variant decides which
// fields are meaningful.
struct LossComponents {
  double l_ae = 0.0;
  double l_ba_final = 0.0;
  std::map<int, double> l_ba_shallow;
  double l_gc_final = 0.0;
  std::map<int, double> l_gc_shallow;
};

// L_total is linear in the primitive terms; these are the coefficients for
// a given variant. Used both to compose the value and to scale head
// gradients during backprop (a zero coefficient means the head is skipped
// entirely, contributing no gradient at all).
struct LossTermCoefficients {
  double ae = 0.0;
  double ba_final = 0.0;
  std::map<int, double> ba_shallow;
  double gc_final = 0.0;
  std::map<int, double> gc_shallow;
};

// Mean squared error over every voxel of the batch. If dxhat is non-null it
// receives dL/dxhat.
double reconstruction_loss(const Tensor& x, const Tensor& xhat,
                           Tensor* dxhat = nullptr);

// Mean absolute error over the batch.
double age_loss(const std::vector<double>& y, const std::vector<double>& yhat,
                std::vector<double>* dyhat = nullptr);

// Mean binary cross-entropy with probabilities clamped to
// [kProbEps, 1 - kProbEps]. Gradient is zero where the clamp is active.
double sex_loss(const std::vector<double>& y, const std::vector<double>& phat,
                std::vector<double>* dphat = nullptr);

// gamma * final + (1 - gamma) * sum_d eta_d * shallow_d.
double ds_combine(double final_loss, const std::map<int, double>& shallow,
                  double gamma, const std::map<int, double>& eta);

LossTermCoefficients loss_coefficients(const LossWeights& w, Variant variant,
                                       const std::vector<int>& depths);

LossBreakdown total_loss(const LossComponents& c, const LossWeights& w,
                         Variant variant);

}  // namespace dsmt
