#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/errors.hpp"

namespace ssvgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelId { SquaredExponential };

inline std::string to_string(KernelId id) {
  switch (id) {
    case KernelId::SquaredExponential:
      return "se";
  }
  return "unknown";
}

inline KernelId kernel_id_from_string(const std::string &name) {
  if (name == "se") return KernelId::SquaredExponential;
  throw ConfigError("unknown kernel '" + name + "'");
}

// Radial profile of the squared-exponential kernel, written in terms of the
// squared weighted distance s = r^2 so that k = tau * profile(s).
// Any radial kernel plugs in by providing profile() and profile_derivative()
// (d profile / d s).
struct SquaredExponential {
  static constexpr KernelId id = KernelId::SquaredExponential;
  static double profile(double s) { return std::exp(-0.5 * s); }
  static double profile_derivative(double s) { return -0.5 * std::exp(-0.5 * s); }
};

/// Anisotropic stationary kernel parameters. theta holds inverse
/// lengthscales (any sign; only theta_j^2 enters the kernel).
struct KernelParams {
  VectorXd theta;
  double tau = 1.0;
  double noise_var = 1.0;
  KernelId kernel_id = KernelId::SquaredExponential;

  Eigen::Index dim() const { return theta.size(); }

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("kernel scale tau must be positive");
    // noise_var == 0 is allowed for noiseless interpolation checks.
    if (!(noise_var >= 0.0) || !std::isfinite(noise_var))
      throw ConfigError("noise variance must be nonnegative");
    if (!theta.allFinite()) throw ConfigError("inverse lengthscales must be finite");
  }
};

template <class Kernel = SquaredExponential>
double kernel_eval(const VectorXd &x, const VectorXd &x2, const KernelParams &params) {
  if (x.size() != params.theta.size() || x2.size() != params.theta.size())
    throw ConfigError("kernel_eval: dimension mismatch");
  const double s = (params.theta.array() * (x - x2).array()).square().sum();
  return params.tau * Kernel::profile(s);
}

namespace detail {

// Indices j with theta_j != 0; columns with zero weight never affect the kernel.
inline std::vector<Eigen::Index> nonzero_dims(const VectorXd &theta) {
  std::vector<Eigen::Index> dims;
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    if (theta[j] != 0.0) dims.push_back(j);
  return dims;
}

inline MatrixXd select_columns(const MatrixXd &X, const std::vector<Eigen::Index> &cols) {
  MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
  return out;
}

inline MatrixXd select_rows(const MatrixXd &X, const std::vector<Eigen::Index> &rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  return out;
}

inline VectorXd select_entries(const VectorXd &v, const std::vector<Eigen::Index> &idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[idx[r]];
  return out;
}

// Squared weighted distances between rows of A and rows of B, where the
// columns have already been multiplied by their weights.
inline MatrixXd scaled_sq_dist(const MatrixXd &A, const MatrixXd &B) {
  MatrixXd D = -2.0 * (A * B.transpose());
  D.colwise() += A.rowwise().squaredNorm();
  D.rowwise() += B.rowwise().squaredNorm().transpose();
  return D.cwiseMax(0.0);
}

inline MatrixXd scaled_sq_dist(const MatrixXd &A) {
  MatrixXd D = scaled_sq_dist(A, A);
  // The blocked product is not bitwise symmetric; mirror the upper triangle.
  D.triangularView<Eigen::StrictlyLower>() = D.transpose();
  D.diagonal().setZero();
  return D;
}

}  // namespace detail

/// Cross-covariance matrix k(A_i, B_k) over all columns.
template <class Kernel = SquaredExponential>
MatrixXd cross_kernel(const MatrixXd &A, const MatrixXd &B, const KernelParams &params) {
  if (A.cols() != params.dim() || B.cols() != params.dim())
    throw ConfigError("cross_kernel: dimension mismatch");
  const MatrixXd As = A * params.theta.asDiagonal();
  const MatrixXd Bs = B * params.theta.asDiagonal();
  return detail::scaled_sq_dist(As, Bs).unaryExpr([&](double s) { return params.tau * Kernel::profile(s); });
}

}  // namespace ssvgp
