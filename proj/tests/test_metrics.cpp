#include "dsmt/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dsmt/errors.hpp"
#include "support/oracles.hpp"

using namespace dsmt;

TEST(Mae, HandValues) {
  EXPECT_DOUBLE_EQ(mae({20, 30, 40}, {20, 30, 40}), 0.0);
  EXPECT_NEAR(mae({20, 30, 40}, {22, 30, 37}), 5.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(mae({50}, {43}), 7.0);
  EXPECT_THROW(mae({}, {}), ParameterError);
}

TEST(ErrorSd, HandValues) {
  EXPECT_DOUBLE_EQ(error_sd({10, 20}, {7, 17}), 0.0);  // constant residuals
  EXPECT_DOUBLE_EQ(error_sd({2, -2}, {0, 0}), 2.0);
  EXPECT_DOUBLE_EQ(error_sd({1, 3}, {0, 0}), 1.0);
}

TEST(Rmse, HandValues) {
  EXPECT_DOUBLE_EQ(rmse({1, 2}, {1, 2}), 0.0);
  EXPECT_NEAR(rmse({0, 0}, {3, 4}), std::sqrt(12.5), 1e-12);
  EXPECT_DOUBLE_EQ(rmse({5, 6}, {2, 3}), 3.0);  // equal residuals: rmse == mae
}

TEST(R2, HandValues) {
  EXPECT_DOUBLE_EQ(r2({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(r2({1, 2, 3}, {2, 2, 2}), 0.0);  // mean predictor
  EXPECT_NEAR(r2({1, 2, 3}, {1, 2, 4}), 0.5, 1e-12);
  EXPECT_THROW(r2({2, 2, 2}, {1, 2, 3}), ParameterError);
  EXPECT_THROW(r2({1}, {1}), ParameterError);
}

// Acceptance criterion 3: brute-force recomputation agreement on 100 random
// vectors, with rmse >= mae everywhere.
TEST(MetricOracle, RandomEquivalence) {
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> age(15.0, 95.0);
  std::uniform_int_distribution<int> len(2, 60);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    std::vector<double> y(n), yhat(n);
    for (int i = 0; i < n; ++i) {
      y[i] = age(rng);
      yhat[i] = age(rng);
    }
    EXPECT_NEAR(mae(y, yhat), oracle::brute_mae(y, yhat), 1e-9);
    EXPECT_NEAR(error_sd(y, yhat), oracle::brute_sd(y, yhat), 1e-9);
    EXPECT_NEAR(rmse(y, yhat), oracle::brute_rmse(y, yhat), 1e-9);
    EXPECT_NEAR(r2(y, yhat), oracle::brute_r2(y, yhat), 1e-9);
    EXPECT_GE(rmse(y, yhat) + 1e-15, mae(y, yhat));
  }
}

TEST(MetricProperties, PermutationInvariance) {
  std::mt19937_64 rng(5);
  std::vector<double> y(20), yhat(20);
  std::uniform_real_distribution<double> age(15.0, 95.0);
  for (int i = 0; i < 20; ++i) {
    y[i] = age(rng);
    yhat[i] = age(rng);
  }
  std::vector<int> idx(20);
  for (int i = 0; i < 20; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> yp(20), yhp(20);
  for (int i = 0; i < 20; ++i) {
    yp[i] = y[idx[i]];
    yhp[i] = yhat[idx[i]];
  }
  EXPECT_NEAR(mae(y, yhat), mae(yp, yhp), 1e-12);
  EXPECT_NEAR(rmse(y, yhat), rmse(yp, yhp), 1e-12);
  EXPECT_NEAR(error_sd(y, yhat), error_sd(yp, yhp), 1e-12);
  EXPECT_NEAR(r2(y, yhat), r2(yp, yhp), 1e-12);
}

TEST(MetricProperties, R2ShiftInvariance) {
  std::vector<double> y = {21, 35, 47, 60, 72};
  std::vector<double> yhat = {25, 33, 50, 58, 70};
  std::vector<double> ys = y, yhs = yhat;
  for (auto& v : ys) v += 11.5;
  for (auto& v : yhs) v += 11.5;
  EXPECT_NEAR(r2(y, yhat), r2(ys, yhs), 1e-12);
}

TEST(BracketIndex, SevenBinEdges) {
  const auto& e = kDefaultBracketEdges;
  EXPECT_EQ(bracket_index(25.0, e), 0);
  EXPECT_EQ(bracket_index(18.0, e), 0);
  EXPECT_EQ(bracket_index(26.0, e), 1);
  EXPECT_EQ(bracket_index(35.0, e), 1);
  EXPECT_EQ(bracket_index(75.0, e), 5);
  EXPECT_EQ(bracket_index(75.5, e), 6);
  EXPECT_EQ(bracket_index(90.0, e), 6);
  EXPECT_EQ(bracket_label(0, e), "<=25");
  EXPECT_EQ(bracket_label(1, e), "26-35");
  EXPECT_EQ(bracket_label(6, e), ">75");
}

TEST(Stratify, SingleBinConcentration) {
  std::vector<double> y(8, 30.0), yhat(8, 31.0);
  std::vector<int> sexes = {0, 1, 0, 1, 0, 1, 0, 1};
  auto rep = stratify(y, yhat, sexes, kDefaultBracketEdges);
  EXPECT_EQ(rep.by_bracket.size(), 7u);
  EXPECT_EQ(rep.by_bracket[1].n, 8u);
  for (int b : {0, 2, 3, 4, 5, 6}) EXPECT_EQ(rep.by_bracket[b].n, 0u);
  std::size_t total = 0;
  for (const auto& g : rep.by_bracket) total += g.n;
  EXPECT_EQ(total, rep.overall.n);
  EXPECT_EQ(rep.by_sex.female.n + rep.by_sex.male.n, rep.overall.n);
}

TEST(Stratify, PerSexMatchesSubsetRecomputation) {
  std::vector<double> y = {20, 30, 40, 50, 60, 70};
  std::vector<double> yhat = {22, 29, 44, 48, 63, 69};
  std::vector<int> sexes = {0, 0, 0, 1, 1, 1};
  auto rep = stratify(y, yhat, sexes, kDefaultBracketEdges);
  EXPECT_NEAR(rep.by_sex.female.mae,
              oracle::brute_mae({20, 30, 40}, {22, 29, 44}), 1e-12);
  EXPECT_NEAR(rep.by_sex.male.mae,
              oracle::brute_mae({50, 60, 70}, {48, 63, 69}), 1e-12);
  EXPECT_EQ(rep.by_sex.female.n, 3u);
  EXPECT_EQ(rep.by_sex.male.n, 3u);
}

TEST(Stratify, GroupCountsAlwaysSum) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> age(15.0, 95.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    std::vector<double> y(n), yhat(n);
    std::vector<int> sexes(n);
    for (int i = 0; i < n; ++i) {
      y[i] = age(rng);
      yhat[i] = age(rng);
      sexes[i] = static_cast<int>(rng() % 2);
    }
    auto rep = stratify(y, yhat, sexes, kDefaultBracketEdges);
    std::size_t total = 0;
    for (const auto& g : rep.by_bracket) total += g.n;
    EXPECT_EQ(total, static_cast<std::size_t>(n));
    EXPECT_EQ(rep.by_sex.female.n + rep.by_sex.male.n,
              static_cast<std::size_t>(n));
  }
}

TEST(MetricsReport, RmseAtLeastMaeAndR2Bounded) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> age(15.0, 95.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 30);
    std::vector<double> y(n), yhat(n);
    for (int i = 0; i < n; ++i) {
      y[i] = age(rng);
      yhat[i] = age(rng);
    }
    auto m = compute_metrics(y, yhat);
    EXPECT_GE(m.rmse + 1e-15, m.mae);
    if (m.r2) EXPECT_LE(*m.r2, 1.0 + 1e-12);
  }
}
