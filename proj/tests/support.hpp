#pragma once

// Shared helpers for the unit tests: seeded generators and small dense
// reference implementations that avoid the library's code paths.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace testing_support {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>()(rng); }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

  MatrixXd matrix(Index r, Index c) {
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }
  VectorXd vector(Index n) { return matrix(n, 1).col(0); }
  VectorXd uniform_vector(Index n, double lo, double hi) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
};

// Dense SE covariance with a plain double loop.
inline MatrixXd dense_kernel(const MatrixXd &A, const MatrixXd &B, const VectorXd &theta, double tau) {
  MatrixXd K(A.rows(), B.rows());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index k = 0; k < B.rows(); ++k) {
      double s = 0.0;
      for (Index j = 0; j < A.cols(); ++j) {
        const double diff = theta[j] * (A(i, j) - B(k, j));
        s += diff * diff;
      }
      K(i, k) = tau * std::exp(-0.5 * s);
    }
  return K;
}

// log N(y | 0, K + nugget I) via explicit inverse and LU determinant.
inline double dense_log_marginal(const VectorXd &y, const MatrixXd &X, const VectorXd &theta, double tau,
                                 double noise, double jitter) {
  MatrixXd G = dense_kernel(X, X, theta, tau);
  G.diagonal().array() += noise + jitter;
  const MatrixXd inv = G.inverse();
  const double n = static_cast<double>(y.size());
  return -0.5 * y.dot(inv * y) - 0.5 * std::log(G.determinant()) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Moments {
  double mean;
  double var;
};

// GP predictive at one point by dense solve, variance including the nugget.
inline Moments dense_predict(const MatrixXd &X, const VectorXd &y, const VectorXd &x, const VectorXd &theta, double tau,
                             double noise, double jitter) {
  MatrixXd G = dense_kernel(X, X, theta, tau);
  G.diagonal().array() += noise + jitter;
  const MatrixXd inv = G.inverse();
  const VectorXd k = dense_kernel(X, x.transpose(), theta, tau).col(0);
  return {k.dot(inv * y), tau + noise + jitter - k.dot(inv * k)};
}

inline MatrixXd drop_row(const MatrixXd &X, Index i) {
  MatrixXd out(X.rows() - 1, X.cols());
  for (Index r = 0, o = 0; r < X.rows(); ++r)
    if (r != i) out.row(o++) = X.row(r);
  return out;
}

inline VectorXd drop_entry(const VectorXd &v, Index i) { return drop_row(v, i).col(0); }

inline double log_normal(double y, double m, double v) {
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (y - m) * (y - m) / v;
}

}  // namespace testing_support
