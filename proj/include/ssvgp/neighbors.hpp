#pragma once

// Exact k-nearest-neighbour search under the weighted metric
// d(x, x') = || w o (x - x') ||_2 restricted to a set of active dimensions.
// Two tree structures are provided (KD-tree and Ball-tree); the default picks
// a KD-tree below 100 active dimensions and a Ball-tree otherwise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/errors.hpp"

namespace ssvgp {

enum class TreeKind { KdTree, BallTree };

inline constexpr Eigen::Index kKdTreeMaxDims = 100;
inline constexpr int kDefaultPoolCap = 10000;

class NnIndex {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  NnIndex(const Eigen::MatrixXd &X, const Eigen::VectorXd &weights, std::vector<Eigen::Index> active_dims,
          std::optional<TreeKind> kind = std::nullopt, int leaf_size = 16)
      : leaf_size_(std::max(1, leaf_size)) {
    if (weights.size() != X.cols()) throw ConfigError("build_index: weights length must match columns");
    if (!weights.allFinite() || (weights.array() < 0.0).any())
      throw ConfigError("build_index: weights must be finite and nonnegative");
    std::erase_if(active_dims, [&](Eigen::Index j) {
      if (j < 0 || j >= X.cols()) throw ConfigError("build_index: active dimension out of range");
      return weights[j] == 0.0;
    });
    std::sort(active_dims.begin(), active_dims.end());
    active_dims.erase(std::unique(active_dims.begin(), active_dims.end()), active_dims.end());

    weights_ = Eigen::VectorXd::Zero(X.cols());
    if (active_dims.empty()) {
      // Every dimension pruned: fall back to the plain Euclidean metric.
      fallback_ = true;
      for (Eigen::Index j = 0; j < X.cols(); ++j) active_dims.push_back(j);
      weights_.setOnes();
    } else {
      for (auto j : active_dims) weights_[j] = weights[j];
    }
    dims_ = std::move(active_dims);
    kind_ = kind.value_or(static_cast<Eigen::Index>(dims_.size()) < kKdTreeMaxDims ? TreeKind::KdTree
                                                                                   : TreeKind::BallTree);

    const Eigen::Index n = X.rows();
    const auto p = static_cast<Eigen::Index>(dims_.size());
    points_.resize(n, p);
    for (Eigen::Index c = 0; c < p; ++c) points_.col(c) = X.col(dims_[static_cast<std::size_t>(c)]) * weights_[dims_[static_cast<std::size_t>(c)]];

    perm_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;
    if (n > 0) build_node(0, n);
  }

  TreeKind kind() const { return kind_; }
  Eigen::Index size() const { return points_.rows(); }
  const std::vector<Eigen::Index> &active_dims() const { return dims_; }
  const Eigen::VectorXd &weights() const { return weights_; }
  bool uses_fallback_metric() const { return fallback_; }
  const RowMatrix &points() const { return points_; }

  /// Maps a full-dimensional input into the index's weighted coordinates.
  Eigen::VectorXd transform(const Eigen::VectorXd &x) const {
    if (x.size() != weights_.size()) throw ConfigError("query: dimension mismatch");
    Eigen::VectorXd z(static_cast<Eigen::Index>(dims_.size()));
    for (std::size_t c = 0; c < dims_.size(); ++c) z[static_cast<Eigen::Index>(c)] = x[dims_[c]] * weights_[dims_[c]];
    return z;
  }

  /// Exact k nearest neighbours of x (a full-dimensional input), nearest
  /// first, ties broken by smaller original index. `exclude` drops one index.
  std::vector<Eigen::Index> query(const Eigen::VectorXd &x, Eigen::Index k,
                                  std::optional<Eigen::Index> exclude = std::nullopt) const {
    return query_transformed(transform(x), k, exclude);
  }

  std::vector<Eigen::Index> query_transformed(const Eigen::VectorXd &z, Eigen::Index k,
                                              std::optional<Eigen::Index> exclude = std::nullopt) const {
    const Eigen::Index n = size();
    const Eigen::Index limit = n - (exclude && *exclude >= 0 && *exclude < n ? 1 : 0);
    if (k < 1 || k > limit) throw ConfigError("query_knn: k out of range");
    Search s{z, k, exclude.value_or(-1), {}};
    search(0, s);
    std::vector<Candidate> found;
    found.reserve(static_cast<std::size_t>(k));
    while (!s.heap.empty()) {
      found.push_back(s.heap.top());
      s.heap.pop();
    }
    std::vector<Eigen::Index> out(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) out[found.size() - 1 - i] = found[i].index;
    return out;
  }

  double sq_dist_to(const Eigen::VectorXd &z, Eigen::Index i) const {
    double acc = 0.0;
    const double *row = points_.data() + i * points_.cols();
    for (Eigen::Index c = 0; c < points_.cols(); ++c) {
      const double diff = row[c] - z[c];
      acc += diff * diff;
    }
    return acc;
  }

 private:
  struct Node {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    int left = -1;
    int right = -1;
    double radius = 0.0;  // Ball-tree only
  };

  struct Candidate {
    double dist;
    Eigen::Index index;
    bool operator<(const Candidate &o) const { return dist < o.dist || (dist == o.dist && index < o.index); }
  };

  struct Search {
    const Eigen::VectorXd &z;
    Eigen::Index k;
    Eigen::Index exclude;
    std::priority_queue<Candidate> heap;  // worst candidate on top
  };

  int build_node(Eigen::Index begin, Eigen::Index end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    const Eigen::Index p = points_.cols();
    lo_.conservativeResize(static_cast<Eigen::Index>(nodes_.size()), p);
    hi_.conservativeResize(static_cast<Eigen::Index>(nodes_.size()), p);
    Eigen::RowVectorXd lo = Eigen::RowVectorXd::Constant(p, std::numeric_limits<double>::infinity());
    Eigen::RowVectorXd hi = -lo;
    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(p);
    for (Eigen::Index i = begin; i < end; ++i) {
      const auto row = points_.row(perm_[static_cast<std::size_t>(i)]);
      lo = lo.cwiseMin(row);
      hi = hi.cwiseMax(row);
      centroid += row;
    }
    centroid /= static_cast<double>(end - begin);
    if (kind_ == TreeKind::KdTree) {
      lo_.row(id) = lo;
      hi_.row(id) = hi;
    } else {
      // Ball-tree nodes reuse lo_ for the centre.
      lo_.row(id) = centroid;
      double r2 = 0.0;
      for (Eigen::Index i = begin; i < end; ++i)
        r2 = std::max(r2, (points_.row(perm_[static_cast<std::size_t>(i)]) - centroid).squaredNorm());
      nodes_[static_cast<std::size_t>(id)].radius = std::sqrt(r2);
    }

    if (end - begin <= leaf_size_) return id;
    const Eigen::Index mid = begin + (end - begin) / 2;
    auto first = perm_.begin() + begin, last = perm_.begin() + end, nth = perm_.begin() + mid;

    if (kind_ == TreeKind::KdTree) {
      Eigen::Index axis = 0;
      const double spread = (hi - lo).maxCoeff(&axis);
      if (!(spread > 0.0)) return id;
      std::nth_element(first, nth, last, [&](Eigen::Index a, Eigen::Index b) {
        const double va = points_(a, axis), vb = points_(b, axis);
        return va < vb || (va == vb && a < b);
      });
    } else {
      Eigen::Index far_a = perm_[static_cast<std::size_t>(begin)];
      double best = -1.0;
      for (Eigen::Index i = begin; i < end; ++i) {
        const Eigen::Index idx = perm_[static_cast<std::size_t>(i)];
        const double d2 = (points_.row(idx) - centroid).squaredNorm();
        if (d2 > best) best = d2, far_a = idx;
      }
      Eigen::Index far_b = far_a;
      best = -1.0;
      for (Eigen::Index i = begin; i < end; ++i) {
        const Eigen::Index idx = perm_[static_cast<std::size_t>(i)];
        const double d2 = (points_.row(idx) - points_.row(far_a)).squaredNorm();
        if (d2 > best) best = d2, far_b = idx;
      }
      if (!(best > 0.0)) return id;
      const Eigen::RowVectorXd dir = points_.row(far_b) - points_.row(far_a);
      std::vector<double> proj(static_cast<std::size_t>(points_.rows()));
      for (Eigen::Index i = begin; i < end; ++i) {
        const Eigen::Index idx = perm_[static_cast<std::size_t>(i)];
        proj[static_cast<std::size_t>(idx)] = points_.row(idx).dot(dir);
      }
      std::nth_element(first, nth, last, [&](Eigen::Index a, Eigen::Index b) {
        const double va = proj[static_cast<std::size_t>(a)], vb = proj[static_cast<std::size_t>(b)];
        return va < vb || (va == vb && a < b);
      });
    }
    const int l = build_node(begin, mid);
    const int r = build_node(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  double lower_bound(int id, const Eigen::VectorXd &z) const {
    if (kind_ == TreeKind::KdTree) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < z.size(); ++c) {
        const double v = z[c];
        const double gap = v < lo_(id, c) ? lo_(id, c) - v : (v > hi_(id, c) ? v - hi_(id, c) : 0.0);
        acc += gap * gap;
      }
      return acc;
    }
    const double centre = std::sqrt((lo_.row(id).transpose() - z).squaredNorm());
    // Relative slack keeps rounding from pruning a ball that holds a tie.
    const double gap = centre - nodes_[static_cast<std::size_t>(id)].radius * (1.0 + 1e-10);
    return gap > 0.0 ? gap * gap * (1.0 - 1e-10) : 0.0;
  }

  void offer(Search &s, Eigen::Index idx) const {
    if (idx == s.exclude) return;
    const Candidate c{sq_dist_to(s.z, idx), idx};
    if (static_cast<Eigen::Index>(s.heap.size()) < s.k) {
      s.heap.push(c);
    } else if (c < s.heap.top()) {
      s.heap.pop();
      s.heap.push(c);
    }
  }

  void search(int id, Search &s) const {
    const Node &node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (Eigen::Index i = node.begin; i < node.end; ++i) offer(s, perm_[static_cast<std::size_t>(i)]);
      return;
    }
    const double lb_l = lower_bound(node.left, s.z);
    const double lb_r = lower_bound(node.right, s.z);
    const bool left_first = lb_l <= lb_r;
    const int first = left_first ? node.left : node.right;
    const int second = left_first ? node.right : node.left;
    const double lb_first = left_first ? lb_l : lb_r;
    const double lb_second = left_first ? lb_r : lb_l;
    if (!prunable(s, lb_first)) search(first, s);
    if (!prunable(s, lb_second)) search(second, s);
  }

  static bool prunable(const Search &s, double lb) {
    return static_cast<Eigen::Index>(s.heap.size()) == s.k && lb > s.heap.top().dist;
  }

  int leaf_size_;
  bool fallback_ = false;
  TreeKind kind_ = TreeKind::KdTree;
  std::vector<Eigen::Index> dims_;
  Eigen::VectorXd weights_;
  RowMatrix points_;
  std::vector<Eigen::Index> perm_;
  std::vector<Node> nodes_;
  Eigen::MatrixXd lo_, hi_;
};

inline NnIndex build_index(const Eigen::MatrixXd &X, const Eigen::VectorXd &weights,
                           std::vector<Eigen::Index> active_dims, std::optional<TreeKind> kind = std::nullopt) {
  return NnIndex(X, weights, std::move(active_dims), kind);
}

inline std::vector<Eigen::Index> query_knn(const NnIndex &index, const Eigen::VectorXd &x, Eigen::Index k,
                                           std::optional<Eigen::Index> exclude = std::nullopt) {
  return index.query(x, k, exclude);
}

/// A seed point plus its m-1 nearest neighbours; rescale = n / m turns the
/// minibatch log likelihood gradient into a full-data estimate.
struct Minibatch {
  Eigen::Index seed_index = 0;
  std::vector<Eigen::Index> member_indices;
  double rescale = 1.0;
};

using Rng = std::mt19937_64;

namespace detail {

// Floyd's algorithm: `count` distinct indices from [0, n).
inline std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index count, Rng &rng) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(count));
  std::unordered_set<Eigen::Index> seen;
  for (Eigen::Index j = n - count; j < n; ++j) {
    const Eigen::Index t = std::uniform_int_distribution<Eigen::Index>(0, j)(rng);
    if (seen.insert(t).second) {
      out.push_back(t);
    } else {
      seen.insert(j);
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace detail

/// Draws a uniformly random seed and its m-1 nearest neighbours. When n
/// exceeds pool_cap the neighbours come from a fresh uniform candidate pool
/// of pool_cap points, scanned exhaustively.
inline Minibatch sample_minibatch(const NnIndex &index, Eigen::Index m, Eigen::Index pool_cap, Rng &rng) {
  const Eigen::Index n = index.size();
  if (m < 1 || m > n) throw ConfigError("sample_minibatch: need 1 <= m <= n");
  if (pool_cap < m) throw ConfigError("sample_minibatch: pool_cap must be >= m");
  Minibatch mb;
  mb.seed_index = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  mb.rescale = static_cast<double>(n) / static_cast<double>(m);
  mb.member_indices.push_back(mb.seed_index);
  if (m == 1) return mb;

  const Eigen::VectorXd z = index.points().row(mb.seed_index).transpose();
  if (n <= pool_cap) {
    const auto nn = index.query_transformed(z, m - 1, mb.seed_index);
    mb.member_indices.insert(mb.member_indices.end(), nn.begin(), nn.end());
    return mb;
  }
  auto pool = detail::sample_without_replacement(n, pool_cap, rng);
  std::erase(pool, mb.seed_index);
  std::vector<std::pair<double, Eigen::Index>> cand;
  cand.reserve(pool.size());
  for (auto i : pool) cand.emplace_back(index.sq_dist_to(z, i), i);
  std::partial_sort(cand.begin(), cand.begin() + (m - 1), cand.end());
  for (Eigen::Index r = 0; r < m - 1; ++r) mb.member_indices.push_back(cand[static_cast<std::size_t>(r)].second);
  return mb;
}

}  // namespace ssvgp
