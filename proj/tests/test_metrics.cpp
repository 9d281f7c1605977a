#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "ssvgp/metrics.hpp"
#include "support.hpp"

using namespace ssvgp;
using testing_support::Gen;
using Eigen::VectorXd;

TEST(NormalizedMse, Examples) {
  VectorXd y(3), yhat(3);
  y << 0.0, 1.0, 2.0;
  yhat << 0.0, 1.0, 1.0;
  EXPECT_DOUBLE_EQ(normalized_mse(y, yhat), 0.5);
  EXPECT_EQ(normalized_mse(y, y), 0.0);
  EXPECT_DOUBLE_EQ(normalized_mse(y, VectorXd::Constant(3, y.mean())), 1.0);
  EXPECT_THROW(normalized_mse(VectorXd::Ones(3), yhat), DataError);
  EXPECT_THROW(normalized_mse(y, VectorXd::Ones(2)), ConfigError);
}

TEST(NormalizedMse, AffineInvariance) {
  Gen g(81);
  for (int t = 0; t < 50; ++t) {
    const VectorXd y = g.vector(30), yhat = g.vector(30);
    const double a = g.uniform(0.01, 100) * (t % 2 ? -1 : 1), b = g.uniform(-50, 50);
    const VectorXd y2 = (a * y).array() + b, yhat2 = (a * yhat).array() + b;
    EXPECT_NEAR(normalized_mse(y2, yhat2), normalized_mse(y, yhat), 1e-9 * normalized_mse(y, yhat));
  }
}

TEST(Mcc, PerfectAndComplement) {
  const auto rel = indicator(10, {0, 3, 4});
  EXPECT_DOUBLE_EQ(mcc(rel, rel), 1.0);
  std::vector<char> comp(rel.size());
  std::transform(rel.begin(), rel.end(), comp.begin(), [](char c) { return static_cast<char>(!c); });
  EXPECT_DOUBLE_EQ(mcc(comp, rel), -1.0);
  EXPECT_EQ(mcc(std::vector<char>(10, 0), rel), 0.0);
}

TEST(Mcc, OneFalsePositiveInHundred) {
  const SelectionOutcome o{5, 1, 94, 0};
  // (tp tn - fp fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn))
  const double oracle = (5.0 * 94.0) / std::sqrt(6.0 * 5.0 * 95.0 * 94.0);
  EXPECT_NEAR(mcc(o), oracle, 1e-15);
  EXPECT_NEAR(mcc(o), 0.90806, 1e-5);
  auto rel = indicator(100, {0, 1, 2, 3, 4});
  auto sel = rel;
  sel[50] = 1;
  EXPECT_NEAR(mcc(sel, rel), oracle, 1e-15);
}

TEST(Mcc, LabelSwapSymmetry) {
  Gen g(82);
  for (int t = 0; t < 200; ++t) {
    const auto d = static_cast<std::size_t>(g.integer(2, 60));
    std::vector<char> sel(d), rel(d), nsel(d), nrel(d);
    for (std::size_t j = 0; j < d; ++j) {
      sel[j] = g.uniform(0, 1) < 0.3;
      rel[j] = g.uniform(0, 1) < 0.3;
      nsel[j] = !sel[j];
      nrel[j] = !rel[j];
    }
    EXPECT_NEAR(mcc(sel, rel), mcc(nsel, nrel), 1e-12);
    EXPECT_GE(mcc(sel, rel), -1.0);
    EXPECT_LE(mcc(sel, rel), 1.0);
  }
}

TEST(PipProfile, HandCase) {
  VectorXd v(4);
  v << 0.1, 0.9, 0.3, 0.2;
  const VectorXd p = pip_profile({v}, {1});
  EXPECT_EQ(p, (VectorXd(4) << 0.9, 0.3, 0.2, 0.1).finished());
  VectorXd ordered(4);
  ordered << 0.8, 0.5, 0.4, 0.0;
  EXPECT_EQ(pip_profile({ordered}, {0, 1}), ordered);
}

TEST(PipProfile, PermutationInvarianceAndMonotoneBlocks) {
  Gen g(83);
  const std::vector<Eigen::Index> rel{2, 5, 7};
  for (int t = 0; t < 50; ++t) {
    std::vector<VectorXd> trials;
    for (int k = 0; k < 4; ++k) trials.push_back(g.uniform_vector(12, 0, 1));
    const VectorXd p = pip_profile(trials, rel);
    for (Eigen::Index j = 1; j < 3; ++j) EXPECT_GE(p[j - 1], p[j]);
    for (Eigen::Index j = 4; j < 12; ++j) EXPECT_GE(p[j - 1], p[j]);
    // Permuting values within the relevant block and within the irrelevant
    // block of each trial leaves the profile unchanged.
    std::vector<VectorXd> shuffled = trials;
    for (auto &s : shuffled) {
      std::swap(s[2], s[7]);
      std::swap(s[0], s[11]);
      std::swap(s[3], s[9]);
    }
    EXPECT_LT((pip_profile(shuffled, rel) - p).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(pip_profile({VectorXd::Zero(3), VectorXd::Zero(4)}, {0}), ConfigError);
}

TEST(Summaries, MedianMeanSd) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(mean({1.0, 2.0, 6.0}), 3.0);
  EXPECT_NEAR(stddev({1.0, 2.0, 6.0}), std::sqrt(7.0), 1e-15);
  EXPECT_THROW(median({}), ConfigError);
}
