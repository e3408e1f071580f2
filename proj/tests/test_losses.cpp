#include "dsmt/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"

using namespace dsmt;

namespace {

Tensor tensor_from(const std::vector<double>& v) {
  Tensor t({static_cast<int>(v.size())});
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

LossWeights weights(double a, double b, double g,
                    std::map<int, double> eta = {}) {
  LossWeights w;
  w.alpha = a;
  w.beta = b;
  w.gamma = g;
  w.eta = std::move(eta);
  return w;
}

}  // namespace

TEST(ReconstructionLoss, HandValues) {
  Tensor x({2, 2, 2}, 1.0);
  Tensor xhat({2, 2, 2}, 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss(x, xhat), 1.0);

  Tensor a({2, 2, 2}, 0.5);
  Tensor b({2, 2, 2}, 0.25);
  EXPECT_DOUBLE_EQ(reconstruction_loss(a, b), 0.0625);

  EXPECT_DOUBLE_EQ(reconstruction_loss(x, x), 0.0);
}

TEST(ReconstructionLoss, ShapeMismatchThrows) {
  Tensor x({2, 2, 2});
  Tensor y({2, 2, 3});
  EXPECT_THROW(reconstruction_loss(x, y), ShapeError);
}

TEST(AgeLoss, HandValues) {
  EXPECT_DOUBLE_EQ(age_loss({30, 40}, {32, 37}), 2.5);
  EXPECT_DOUBLE_EQ(age_loss({25}, {25.5}), 0.5);
  EXPECT_DOUBLE_EQ(age_loss({30, 40}, {30, 40}), 0.0);
  EXPECT_THROW(age_loss({}, {}), ParameterError);
}

TEST(SexLoss, HandValues) {
  EXPECT_LE(sex_loss({1}, {1.0 - 1e-7}), 2e-7);
  EXPECT_NEAR(sex_loss({1}, {0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(sex_loss({0}, {0.5}), std::log(2.0), 1e-12);
}

TEST(SexLoss, ClampKeepsLossFinite) {
  EXPECT_TRUE(std::isfinite(sex_loss({1}, {0.0})));
  EXPECT_TRUE(std::isfinite(sex_loss({0}, {1.0})));
}

TEST(DsCombine, HandValues) {
  EXPECT_DOUBLE_EQ(ds_combine(7.0, {{2, 123.0}}, 1.0, {{2, 1.0}}), 7.0);
  EXPECT_DOUBLE_EQ(ds_combine(2.0, {{2, 4.0}}, 0.5, {{2, 1.0}}), 3.0);
  EXPECT_DOUBLE_EQ(
      ds_combine(9.0, {{2, 4.0}, {3, 6.0}}, 0.0, {{2, 0.5}, {3, 0.5}}), 5.0);
  EXPECT_THROW(ds_combine(1.0, {{2, 4.0}}, 0.5, {{3, 1.0}}), ParameterError);
}

TEST(TotalLoss, HandValues) {
  LossComponents c;
  c.l_ae = 0.2;
  c.l_ba_final = 2.0;
  c.l_gc_final = 0.6;

  auto b = total_loss(c, weights(0.5, 0.5, 1.0), Variant::kMtlAe);
  EXPECT_NEAR(b.l_total, 0.75, 1e-12);

  b = total_loss(c, weights(1.0, 0.5, 1.0), Variant::kMtlAe);
  EXPECT_DOUBLE_EQ(b.l_total, c.l_ae);

  b = total_loss(c, weights(0.0, 1.0, 1.0), Variant::kMtlAe);
  EXPECT_DOUBLE_EQ(b.l_total, c.l_ba_final);
}

TEST(TotalLoss, VariantCollapses) {
  LossComponents c;
  c.l_ae = 0.3;
  c.l_ba_final = 4.0;
  c.l_ba_shallow = {{2, 6.0}, {3, 8.0}};
  c.l_gc_final = 0.7;
  c.l_gc_shallow = {{2, 0.9}, {3, 1.1}};
  auto w = weights(0.25, 0.75, 0.5, {{2, 0.5}, {3, 0.5}});

  // Baseline ignores every weight: pure final age loss.
  EXPECT_DOUBLE_EQ(total_loss(c, w, Variant::kBaseline).l_total, 4.0);

  // AE: alpha blend of reconstruction and final age loss.
  EXPECT_NEAR(total_loss(c, w, Variant::kAe).l_total,
              0.25 * 0.3 + 0.75 * 4.0, 1e-12);

  // MTL-AE: gamma effectively 1.
  EXPECT_NEAR(total_loss(c, w, Variant::kMtlAe).l_total,
              0.25 * 0.3 + 0.75 * (0.75 * 4.0 + 0.25 * 0.7), 1e-12);

  // DS-AE: beta effectively 1.
  const double l_ba = 0.5 * 4.0 + 0.5 * (0.5 * 6.0 + 0.5 * 8.0);
  EXPECT_NEAR(total_loss(c, w, Variant::kDsAe).l_total,
              0.25 * 0.3 + 0.75 * l_ba, 1e-12);

  // DSMT-AE: the full hierarchy.
  const double l_gc = 0.5 * 0.7 + 0.5 * (0.5 * 0.9 + 0.5 * 1.1);
  EXPECT_NEAR(total_loss(c, w, Variant::kDsmtAe).l_total,
              0.25 * 0.3 + 0.75 * (0.75 * l_ba + 0.25 * l_gc), 1e-12);
}

TEST(TotalLoss, WeightRangeValidated) {
  LossComponents c;
  EXPECT_THROW(total_loss(c, weights(-0.1, 0.5, 0.5), Variant::kMtlAe),
               ParameterError);
  EXPECT_THROW(total_loss(c, weights(0.5, 1.5, 0.5), Variant::kMtlAe),
               ParameterError);
  EXPECT_THROW(
      total_loss(c, weights(0.5, 0.5, 0.5, {{2, 0.4}}), Variant::kDsmtAe),
      ParameterError);
}

// Acceptance criterion 1: implementation path equals an independent
// straight-line oracle on 100 random small inputs, within 1e-9.
TEST(LossOracle, RandomEquivalence) {
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_real_distribution<double> age(18.0, 90.0);
  std::uniform_int_distribution<int> batch_dist(1, 6);

  for (int trial = 0; trial < 100; ++trial) {
    const int n = batch_dist(rng);
    const int voxels = 27;
    oracle::TotalLossInputs in;
    for (int i = 0; i < n * voxels; ++i) {
      in.x.push_back(uni(rng));
      in.xhat.push_back(uni(rng));
    }
    std::vector<int> depths = {2, 3, 4};
    for (int i = 0; i < n; ++i) {
      in.y_ba.push_back(age(rng));
      in.yhat_f.push_back(age(rng));
      in.y_gc.push_back(rng() % 2 ? 1.0 : 0.0);
      in.p_f.push_back(uni(rng) * 0.998 + 0.001);
    }
    for (int d : depths) {
      for (int i = 0; i < n; ++i) {
        in.yhat_d[d].push_back(age(rng));
        in.p_d[d].push_back(uni(rng) * 0.998 + 0.001);
      }
    }
    in.alpha = uni(rng);
    in.beta = uni(rng);
    in.gamma = uni(rng);
    double e2 = uni(rng) + 0.1, e3 = uni(rng) + 0.1, e4 = uni(rng) + 0.1;
    const double es = e2 + e3 + e4;
    in.eta = {{2, e2 / es}, {3, e3 / es}, {4, e4 / es}};

    // Implementation route.
    LossComponents c;
    c.l_ae = reconstruction_loss(tensor_from(in.x), tensor_from(in.xhat));
    c.l_ba_final = age_loss(in.y_ba, in.yhat_f);
    c.l_gc_final = sex_loss(in.y_gc, in.p_f);
    for (int d : depths) {
      c.l_ba_shallow[d] = age_loss(in.y_ba, in.yhat_d[d]);
      c.l_gc_shallow[d] = sex_loss(in.y_gc, in.p_d[d]);
    }
    auto w = weights(in.alpha, in.beta, in.gamma, in.eta);
    auto breakdown = total_loss(c, w, Variant::kDsmtAe);

    EXPECT_NEAR(breakdown.l_total, oracle::total_loss(in), 1e-9)
        << "trial " << trial;

    // The breakdown must recompose through the nested equations.
    const double recomposed =
        w.alpha * breakdown.l_ae +
        (1.0 - w.alpha) * (w.beta * breakdown.l_ba +
                           (1.0 - w.beta) * breakdown.l_gc);
    EXPECT_NEAR(breakdown.l_total, recomposed, 1e-9);
    EXPECT_NEAR(breakdown.l_ba,
                ds_combine(breakdown.l_ba_final, breakdown.l_ba_shallow,
                           w.gamma, w.eta),
                1e-9);

    // Nonnegativity.
    EXPECT_GE(breakdown.l_total, 0.0);
    EXPECT_GE(breakdown.l_ba, 0.0);
    EXPECT_GE(breakdown.l_gc, 0.0);
  }
}

TEST(LossProperties, MonotoneInComponents) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    LossComponents c;
    c.l_ae = uni(rng);
    c.l_ba_final = uni(rng) * 10;
    c.l_gc_final = uni(rng);
    c.l_ba_shallow = {{2, uni(rng) * 10}, {3, uni(rng) * 10}};
    c.l_gc_shallow = {{2, uni(rng)}, {3, uni(rng)}};
    auto w = weights(uni(rng), uni(rng), uni(rng), {{2, 0.5}, {3, 0.5}});
    const double base = total_loss(c, w, Variant::kDsmtAe).l_total;

    auto bump = [&](LossComponents cc) {
      return total_loss(cc, w, Variant::kDsmtAe).l_total;
    };
    LossComponents c1 = c;
    c1.l_ae += 0.5;
    EXPECT_GE(bump(c1), base);
    LossComponents c2 = c;
    c2.l_ba_final += 0.5;
    EXPECT_GE(bump(c2), base);
    LossComponents c3 = c;
    c3.l_gc_shallow[3] += 0.5;
    EXPECT_GE(bump(c3), base);
  }
}

TEST(LossProperties, AffineInAlpha) {
  LossComponents c;
  c.l_ae = 0.4;
  c.l_ba_final = 3.0;
  c.l_gc_final = 0.8;
  c.l_ba_shallow = {{2, 5.0}};
  c.l_gc_shallow = {{2, 0.9}};
  const std::map<int, double> eta = {{2, 1.0}};

  auto at = [&](double a) {
    return total_loss(c, weights(a, 0.6, 0.7, eta), Variant::kDsmtAe);
  };
  const auto b0 = at(0.0);
  const auto b1 = at(1.0);
  const double slope = b1.l_total - b0.l_total;
  EXPECT_NEAR(slope, b0.l_ae - b0.l_dst, 1e-12);
  for (double a : {0.1, 0.25, 0.5, 0.9})
    EXPECT_NEAR(at(a).l_total, b0.l_total + a * slope, 1e-12);
}

// Differentiability: analytic gradients of the composite loss with respect
// to the model outputs match central finite differences.
TEST(LossGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uni(0.05, 0.95);
  std::uniform_real_distribution<double> age(20.0, 80.0);

  const int n = 3, voxels = 8;
  std::vector<double> x(n * voxels), xhat(n * voxels);
  for (auto& v : x) v = uni(rng);
  for (auto& v : xhat) v = uni(rng);
  std::vector<double> y_ba(n), yhat_f(n), y_gc(n), p_f(n);
  std::map<int, std::vector<double>> yhat_d, p_d;
  for (int i = 0; i < n; ++i) {
    y_ba[i] = age(rng);
    yhat_f[i] = age(rng);
    y_gc[i] = rng() % 2 ? 1.0 : 0.0;
    p_f[i] = uni(rng);
  }
  for (int d : {2, 3}) {
    yhat_d[d].resize(n);
    p_d[d].resize(n);
    for (int i = 0; i < n; ++i) {
      yhat_d[d][i] = age(rng);
      p_d[d][i] = uni(rng);
    }
  }
  auto w = weights(0.3, 0.6, 0.7, {{2, 0.4}, {3, 0.6}});
  auto coeff = loss_coefficients(w, Variant::kDsmtAe, {2, 3});

  auto eval = [&]() {
    LossComponents c;
    c.l_ae = reconstruction_loss(tensor_from(x), tensor_from(xhat));
    c.l_ba_final = age_loss(y_ba, yhat_f);
    c.l_gc_final = sex_loss(y_gc, p_f);
    for (int d : {2, 3}) {
      c.l_ba_shallow[d] = age_loss(y_ba, yhat_d[d]);
      c.l_gc_shallow[d] = sex_loss(y_gc, p_d[d]);
    }
    return total_loss(c, w, Variant::kDsmtAe).l_total;
  };

  // Assemble analytic gradients, scaled by the composition coefficients.
  Tensor d_xhat;
  reconstruction_loss(tensor_from(x), tensor_from(xhat), &d_xhat);
  std::vector<double> d_yf, d_pf;
  age_loss(y_ba, yhat_f, &d_yf);
  sex_loss(y_gc, p_f, &d_pf);

  const double h = 1e-5;
  auto check = [&](double* slot, double analytic) {
    const double orig = *slot;
    *slot = orig + h;
    const double lp = eval();
    *slot = orig - h;
    const double lm = eval();
    *slot = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric),
                                   1e-6});
    EXPECT_LT(std::fabs(analytic - numeric) / denom, 1e-4);
  };

  std::uniform_int_distribution<int> pick_vox(0, n * voxels - 1);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < 8; ++k) {
    const int i = pick_vox(rng);
    check(&xhat[i], coeff.ae * d_xhat[i]);
  }
  for (int k = 0; k < 6; ++k) {
    const int i = pick(rng);
    check(&yhat_f[i], coeff.ba_final * d_yf[i]);
    check(&p_f[i], coeff.gc_final * d_pf[i]);
  }
  for (int d : {2, 3}) {
    std::vector<double> d_yd, d_pd;
    age_loss(y_ba, yhat_d[d], &d_yd);
    sex_loss(y_gc, p_d[d], &d_pd);
    for (int k = 0; k < 3; ++k) {
      const int i = pick(rng);
      check(&yhat_d[d][i], coeff.ba_shallow.at(d) * d_yd[i]);
      check(&p_d[d][i], coeff.gc_shallow.at(d) * d_pd[i]);
    }
  }
}
