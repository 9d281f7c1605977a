#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "ssvgp/neighbors.hpp"
#include "support.hpp"

using namespace ssvgp;
using testing_support::Gen;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Sorted (distance, index) scan over every row.
std::vector<Eigen::Index> brute_knn(const MatrixXd &X, const VectorXd &w, const VectorXd &x, Eigen::Index k,
                                    Eigen::Index exclude = -1) {
  std::vector<std::pair<double, Eigen::Index>> all;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (i == exclude) continue;
    double s = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double diff = w[j] * X(i, j) - w[j] * x[j];
      s += diff * diff;
    }
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  std::vector<Eigen::Index> out;
  for (Eigen::Index r = 0; r < k; ++r) out.push_back(all[static_cast<std::size_t>(r)].second);
  return out;
}

std::vector<Eigen::Index> all_dims(Eigen::Index d) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = j;
  return v;
}

}  // namespace

TEST(NnIndex, MatchesBruteForceOnRandomInputs) {
  Gen g(41);
  for (auto kind : {TreeKind::KdTree, TreeKind::BallTree}) {
    for (int t = 0; t < 12; ++t) {
      const Eigen::Index n = g.integer(1, 1000), d = g.integer(1, 8);
      const MatrixXd X = g.matrix(n, d);
      VectorXd w = g.uniform_vector(d, 0.0, 2.0);
      if (d > 1 && t % 3 == 0) w[0] = 0.0;
      const NnIndex index(X, w, all_dims(d), kind);
      EXPECT_EQ(index.kind(), kind);
      for (int q = 0; q < 10; ++q) {
        const Eigen::Index k = g.integer(1, n);
        const VectorXd x = g.vector(d);
        EXPECT_EQ(index.query(x, k), brute_knn(X, w, x, k));
        if (n > 1) {
          const Eigen::Index self = g.integer(0, n - 1);
          const Eigen::Index k2 = g.integer(1, n - 1);
          EXPECT_EQ(index.query(X.row(self).transpose(), k2, self), brute_knn(X, w, X.row(self).transpose(), k2, self));
        }
      }
    }
  }
}

TEST(NnIndex, TiesBreakBySmallerIndex) {
  Gen g(42);
  MatrixXd X(400, 3);
  for (Eigen::Index i = 0; i < 400; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = static_cast<double>(g.integer(0, 3));
  const VectorXd w = VectorXd::Ones(3);
  for (auto kind : {TreeKind::KdTree, TreeKind::BallTree}) {
    const NnIndex index(X, w, all_dims(3), kind, 4);
    for (int q = 0; q < 30; ++q) {
      VectorXd x(3);
      for (int j = 0; j < 3; ++j) x[j] = static_cast<double>(g.integer(0, 3));
      const Eigen::Index k = g.integer(1, 400);
      EXPECT_EQ(index.query(x, k), brute_knn(X, w, x, k));
    }
  }
}

TEST(NnIndex, FullQueryReturnsEveryIndex) {
  Gen g(43);
  const MatrixXd X = g.matrix(50, 3);
  const NnIndex index(X, VectorXd::Ones(3), all_dims(3));
  auto all = index.query(g.vector(3), 50);
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
  const auto others = index.query(X.row(7).transpose(), 49, 7);
  EXPECT_EQ(std::count(others.begin(), others.end(), 7), 0);
  EXPECT_EQ(std::set<Eigen::Index>(others.begin(), others.end()).size(), 49u);
}

TEST(NnIndex, RejectsBadArguments) {
  Gen g(44);
  const MatrixXd X = g.matrix(10, 2);
  const NnIndex index(X, VectorXd::Ones(2), all_dims(2));
  EXPECT_THROW(index.query(VectorXd::Zero(2), 0), ConfigError);
  EXPECT_THROW(index.query(VectorXd::Zero(2), 11), ConfigError);
  EXPECT_THROW(index.query(VectorXd::Zero(2), 10, 3), ConfigError);
  EXPECT_THROW(index.query(VectorXd::Zero(3), 1), ConfigError);
  VectorXd neg(2);
  neg << 1.0, -0.1;
  EXPECT_THROW(NnIndex(X, neg, all_dims(2)), ConfigError);
  EXPECT_THROW(NnIndex(X, VectorXd::Ones(3), all_dims(2)), ConfigError);
  EXPECT_THROW(NnIndex(X, VectorXd::Ones(2), {0, 2}), ConfigError);
}

TEST(NnIndex, ZeroWeightColumnsAreIgnored) {
  Gen g(45);
  const MatrixXd X = g.matrix(300, 4);
  VectorXd w(4);
  w << 1.3, 0.0, 0.7, 0.0;
  MatrixXd X2 = X;
  X2.col(1) = g.vector(300) * 100.0;
  X2.col(3).setConstant(5.0);
  const NnIndex a(X, w, all_dims(4)), b(X2, w, all_dims(4));
  EXPECT_EQ(a.active_dims(), (std::vector<Eigen::Index>{0, 2}));
  for (int q = 0; q < 20; ++q) {
    const Eigen::Index i = g.integer(0, 299);
    EXPECT_EQ(a.query(X.row(i).transpose(), 15, i), b.query(X2.row(i).transpose(), 15, i));
  }
}

TEST(NnIndex, UniformWeightScalingLeavesNeighboursUnchanged) {
  Gen g(46);
  const MatrixXd X = g.matrix(300, 5);
  const VectorXd w = g.uniform_vector(5, 0.1, 2.0);
  const NnIndex a(X, w, all_dims(5)), b(X, 8.0 * w, all_dims(5));
  for (int q = 0; q < 20; ++q) {
    const VectorXd x = g.vector(5);
    EXPECT_EQ(a.query(x, 12), b.query(x, 12));
  }
}

TEST(NnIndex, AllZeroWeightsFallBackToEuclidean) {
  Gen g(47);
  const MatrixXd X = g.matrix(100, 3);
  const NnIndex index(X, VectorXd::Zero(3), all_dims(3));
  EXPECT_TRUE(index.uses_fallback_metric());
  const VectorXd x = g.vector(3);
  EXPECT_EQ(index.query(x, 10), brute_knn(X, VectorXd::Ones(3), x, 10));
  const NnIndex none(X, VectorXd::Ones(3), {});
  EXPECT_TRUE(none.uses_fallback_metric());
}

TEST(NnIndex, DefaultKindFollowsDimension) {
  Gen g(48);
  EXPECT_EQ(NnIndex(g.matrix(20, 5), VectorXd::Ones(5), all_dims(5)).kind(), TreeKind::KdTree);
  EXPECT_EQ(NnIndex(g.matrix(20, 120), VectorXd::Ones(120), all_dims(120)).kind(), TreeKind::BallTree);
}

TEST(Minibatch, WholeDataAndSingleton) {
  Gen g(49);
  const MatrixXd X = g.matrix(40, 2);
  const NnIndex index(X, VectorXd::Ones(2), all_dims(2));
  Rng rng(1);
  Minibatch mb = sample_minibatch(index, 40, 100, rng);
  std::set<Eigen::Index> members(mb.member_indices.begin(), mb.member_indices.end());
  EXPECT_EQ(members.size(), 40u);
  EXPECT_DOUBLE_EQ(mb.rescale, 1.0);
  mb = sample_minibatch(index, 1, 100, rng);
  ASSERT_EQ(mb.member_indices.size(), 1u);
  EXPECT_EQ(mb.member_indices[0], mb.seed_index);
  EXPECT_DOUBLE_EQ(mb.rescale, 40.0);
  EXPECT_THROW(sample_minibatch(index, 0, 100, rng), ConfigError);
  EXPECT_THROW(sample_minibatch(index, 41, 100, rng), ConfigError);
  EXPECT_THROW(sample_minibatch(index, 10, 5, rng), ConfigError);
}

TEST(Minibatch, SeedIsUniform) {
  Gen g(50);
  const Eigen::Index n = 20;
  const NnIndex index(g.matrix(n, 2), VectorXd::Ones(2), all_dims(2));
  Rng rng(2);
  const int draws = 10000;
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < draws; ++t) ++counts[static_cast<std::size_t>(sample_minibatch(index, 5, 100, rng).seed_index)];
  const double p = 1.0 / n, se = std::sqrt(p * (1 - p) / draws);
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, p, 3.5 * se);
}

TEST(Minibatch, MembersAreSeedPlusNearestNeighbours) {
  Gen g(51);
  const MatrixXd X = g.matrix(200, 3);
  const VectorXd w = g.uniform_vector(3, 0.2, 1.5);
  const NnIndex index(X, w, all_dims(3));
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Minibatch mb = sample_minibatch(index, 17, 1000, rng);
    ASSERT_EQ(mb.member_indices.size(), 17u);
    EXPECT_EQ(mb.member_indices[0], mb.seed_index);
    const auto expect = brute_knn(X, w, X.row(mb.seed_index).transpose(), 16, mb.seed_index);
    EXPECT_TRUE(std::equal(expect.begin(), expect.end(), mb.member_indices.begin() + 1));
  }
}

TEST(Minibatch, DeterministicForSeed) {
  Gen g(52);
  const NnIndex index(g.matrix(150, 3), VectorXd::Ones(3), all_dims(3));
  Rng a(9), b(9);
  for (int t = 0; t < 10; ++t)
    EXPECT_EQ(sample_minibatch(index, 10, 60, a).member_indices, sample_minibatch(index, 10, 60, b).member_indices);
}

TEST(Minibatch, CandidatePoolWhenDataExceedsCap) {
  Gen g(53);
  const MatrixXd X = g.matrix(500, 2);
  const NnIndex index(X, VectorXd::Ones(2), all_dims(2));
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Minibatch mb = sample_minibatch(index, 10, 40, rng);
    ASSERT_EQ(mb.member_indices.size(), 10u);
    EXPECT_EQ(std::set<Eigen::Index>(mb.member_indices.begin(), mb.member_indices.end()).size(), 10u);
    EXPECT_DOUBLE_EQ(mb.rescale, 50.0);
    // Members come back nearest first.
    const VectorXd z = index.points().row(mb.seed_index).transpose();
    for (std::size_t r = 2; r < mb.member_indices.size(); ++r)
      EXPECT_LE(index.sq_dist_to(z, mb.member_indices[r - 1]), index.sq_dist_to(z, mb.member_indices[r]));
  }
}

TEST(NnIndex, QueryCostGrowsSublinearly) {
  Gen g(54);
  auto time_queries = [&](Eigen::Index n) {
    const MatrixXd X = g.matrix(n, 5);
    const NnIndex index(X, VectorXd::Ones(5), all_dims(5));
    const MatrixXd Q = g.matrix(500, 5);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t sink = 0;
    for (Eigen::Index q = 0; q < Q.rows(); ++q) sink += index.query(Q.row(q).transpose(), 10).size();
    EXPECT_EQ(sink, 5000u);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const double small = time_queries(10000), large = time_queries(100000);
  EXPECT_LT(large, 30.0 * small);
}
