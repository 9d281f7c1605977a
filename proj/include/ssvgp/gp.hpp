#pragma once

// Exact Gaussian-process regression with a zero prior mean: Gram assembly,
// Cholesky factorisation with bounded jitter escalation, log marginal
// likelihood and its analytic gradients, predictive moments, and exact
// leave-one-out predictive densities. Also the ML-II (type-II maximum
// likelihood) baseline trainer.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/adam.hpp"
#include "ssvgp/errors.hpp"
#include "ssvgp/kernel.hpp"

namespace ssvgp {

inline constexpr double kDefaultJitter = 1e-3;
inline constexpr int kJitterRetries = 3;

/// Factorised noisy Gram matrix K + (noise_var + jitter) I.
struct GramFactor {
  MatrixXd gram;
  MatrixXd chol;  // lower triangular
  double jitter = 0.0;

  Eigen::Index size() const { return gram.rows(); }

  VectorXd solve(const VectorXd &b) const {
    VectorXd x = chol.triangularView<Eigen::Lower>().solve(b);
    chol.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
  }

  MatrixXd solve(const MatrixXd &B) const {
    MatrixXd X = chol.triangularView<Eigen::Lower>().solve(B);
    chol.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
    return X;
  }

  MatrixXd inverse() const { return solve(MatrixXd::Identity(size(), size()).eval()); }

  double log_det() const { return 2.0 * chol.diagonal().array().log().sum(); }
};

/// Noise-free kernel matrix K_XX (no diagonal noise, no jitter).
template <class Kernel = SquaredExponential>
MatrixXd assemble_kernel(const MatrixXd &X, const KernelParams &params) {
  if (X.cols() != params.dim()) throw ConfigError("assemble_kernel: dimension mismatch");
  const auto dims = detail::nonzero_dims(params.theta);
  MatrixXd scaled(X.rows(), static_cast<Eigen::Index>(dims.size()));
  for (std::size_t c = 0; c < dims.size(); ++c)
    scaled.col(static_cast<Eigen::Index>(c)) = X.col(dims[c]) * params.theta[dims[c]];
  return detail::scaled_sq_dist(scaled).unaryExpr([&](double s) { return params.tau * Kernel::profile(s); });
}

namespace detail {

// Cholesky of K + nugget*I, retrying with the jitter multiplied by 10 up to
// kJitterRetries times. Throws NumericError once retries are exhausted.
inline GramFactor factorize(const MatrixXd &kernel, double noise_var, double jitter) {
  if (jitter < 0.0) throw ConfigError("jitter must be nonnegative");
  double current = jitter;
  for (int attempt = 0; attempt <= kJitterRetries; ++attempt) {
    GramFactor f;
    f.gram = kernel;
    f.gram.diagonal().array() += noise_var + current;
    Eigen::LLT<MatrixXd> llt(f.gram);
    if (llt.info() == Eigen::Success) {
      f.chol = llt.matrixL();
      if (f.chol.diagonal().allFinite() && f.chol.diagonal().minCoeff() > 0.0) {
        f.jitter = current;
        return f;
      }
    }
    current = current > 0.0 ? current * 10.0 : 1e-8;
  }
  throw NumericError("Cholesky failed after jitter escalation (ill-conditioned kernel)");
}

}  // namespace detail

template <class Kernel = SquaredExponential>
MatrixXd assemble_gram(const MatrixXd &X, const KernelParams &params, double jitter) {
  MatrixXd g = assemble_kernel<Kernel>(X, params);
  g.diagonal().array() += params.noise_var + jitter;
  return g;
}

template <class Kernel = SquaredExponential>
GramFactor build_gram(const MatrixXd &X, const KernelParams &params, double jitter = kDefaultJitter) {
  if (X.rows() < 1) throw DataError("build_gram: need at least one row");
  return detail::factorize(assemble_kernel<Kernel>(X, params), params.noise_var, jitter);
}

inline double log_marginal(const VectorXd &y, const GramFactor &factor) {
  if (y.size() != factor.size()) throw ConfigError("log_marginal: length mismatch");
  const VectorXd z = factor.chol.triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * z.squaredNorm() - 0.5 * factor.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

/// Gradients of the log marginal likelihood. tau and noise_var are taken in
/// log-parameterisation.
struct LikelihoodGradients {
  VectorXd d_theta;
  double d_log_tau = 0.0;
  double d_log_noise = 0.0;
};

struct MarginalEval {
  double value = 0.0;
  LikelihoodGradients grads;
  double jitter = 0.0;
};

namespace detail {

// Log marginal likelihood and gradients on a compact design: Xa holds only
// the columns whose inverse lengthscales (theta_a) are free.
template <class Kernel = SquaredExponential>
MarginalEval marginal_core(const VectorXd &y, const MatrixXd &Xa, const VectorXd &theta_a, double tau,
                           double noise_var, double jitter) {
  const Eigen::Index n = Xa.rows();
  const MatrixXd scaled = Xa * theta_a.asDiagonal();
  const MatrixXd D = scaled_sq_dist(scaled);
  const MatrixXd K = D.unaryExpr([&](double s) { return tau * Kernel::profile(s); });
  const GramFactor f = factorize(K, noise_var, jitter);

  const VectorXd alpha = f.solve(y);
  const MatrixXd Kinv = f.inverse();
  const MatrixXd W = alpha * alpha.transpose() - Kinv;

  MarginalEval out;
  out.jitter = f.jitter;
  out.value = -0.5 * y.dot(alpha) - 0.5 * f.log_det() - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  out.grads.d_log_tau = 0.5 * W.cwiseProduct(K).sum();
  out.grads.d_log_noise = 0.5 * noise_var * W.trace();

  // dK_ik/dtheta_j = tau h'(s_ik) 2 theta_j (x_ij - x_kj)^2. With
  // B = W o tau h'(D) symmetric, sum_ik B_ik (x_ij - x_kj)^2
  //   = 2 (x_j^2)^T (B 1) - 2 x_j^T B x_j.
  const MatrixXd B = W.cwiseProduct(D.unaryExpr([&](double s) { return tau * Kernel::profile_derivative(s); }));
  const VectorXd row_sums = B.rowwise().sum();
  const MatrixXd BX = B * Xa;
  const VectorXd quad = Xa.cwiseProduct(BX).colwise().sum().transpose();
  const VectorXd lin = Xa.cwiseAbs2().transpose() * row_sums;
  out.grads.d_theta = (2.0 * theta_a.array() * (lin - quad).array()).matrix();
  return out;
}

}  // namespace detail

/// Log marginal likelihood and its gradients. Only dimensions listed in
/// `active` get a theta gradient; all others report exactly 0.
template <class Kernel = SquaredExponential>
MarginalEval evaluate_log_marginal(const VectorXd &y, const MatrixXd &X, const KernelParams &params,
                                   const std::vector<Eigen::Index> &active, double jitter = kDefaultJitter) {
  if (X.cols() != params.dim() || y.size() != X.rows())
    throw ConfigError("evaluate_log_marginal: dimension mismatch");
  // Inactive dimensions still enter the kernel if their theta is nonzero.
  std::vector<char> is_active(static_cast<std::size_t>(params.dim()), 0);
  for (auto j : active) {
    if (j < 0 || j >= params.dim()) throw ConfigError("active dimension out of range");
    is_active[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < params.dim(); ++j)
    if (is_active[static_cast<std::size_t>(j)] || params.theta[j] != 0.0) cols.push_back(j);

  MarginalEval core = detail::marginal_core<Kernel>(y, detail::select_columns(X, cols),
                                                    detail::select_entries(params.theta, cols), params.tau,
                                                    params.noise_var, jitter);
  VectorXd full = VectorXd::Zero(params.dim());
  for (std::size_t c = 0; c < cols.size(); ++c)
    if (is_active[static_cast<std::size_t>(cols[c])]) full[cols[c]] = core.grads.d_theta[static_cast<Eigen::Index>(c)];
  core.grads.d_theta = std::move(full);
  return core;
}

template <class Kernel = SquaredExponential>
LikelihoodGradients log_marginal_gradients(const VectorXd &y, const MatrixXd &X, const KernelParams &params,
                                           const std::vector<Eigen::Index> &active,
                                           double jitter = kDefaultJitter) {
  return evaluate_log_marginal<Kernel>(y, X, params, active, jitter).grads;
}

/// Per-point predictive moments. The variance includes the observation
/// nugget (noise_var plus the jitter actually used by the factorisation).
struct Prediction {
  VectorXd mean;
  VectorXd var;
};

template <class Kernel = SquaredExponential>
Prediction gp_predict(const MatrixXd &X, const VectorXd &y, const MatrixXd &X_star, const KernelParams &params,
                      double jitter = kDefaultJitter) {
  if (X.rows() < 1) throw DataError("gp_predict: empty training set");
  if (X.cols() != params.dim() || X_star.cols() != params.dim() || y.size() != X.rows())
    throw ConfigError("gp_predict: dimension mismatch");
  params.validate();
  const auto dims = detail::nonzero_dims(params.theta);
  const VectorXd th = detail::select_entries(params.theta, dims);
  const MatrixXd A = detail::select_columns(X, dims) * th.asDiagonal();
  const MatrixXd S = detail::select_columns(X_star, dims) * th.asDiagonal();
  const MatrixXd K = detail::scaled_sq_dist(A).unaryExpr([&](double s) { return params.tau * Kernel::profile(s); });
  const GramFactor f = detail::factorize(K, params.noise_var, jitter);
  const MatrixXd Ks =
      detail::scaled_sq_dist(S, A).unaryExpr([&](double s) { return params.tau * Kernel::profile(s); });

  Prediction p;
  p.mean = Ks * f.solve(y);
  const MatrixXd V = f.chol.triangularView<Eigen::Lower>().solve(Ks.transpose());
  const double prior = params.tau * Kernel::profile(0.0) + params.noise_var + f.jitter;
  p.var = (prior - V.colwise().squaredNorm().transpose().array()).cwiseMax(0.0).matrix();
  return p;
}

inline double log_normal_pdf(double y, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (y - mean) * (y - mean) / var;
}

/// Leave-one-out predictive moments from the precision-matrix identities
///   mu_i = y_i - [K^-1 y]_i / [K^-1]_ii,  sigma_i^2 = 1 / [K^-1]_ii.
struct LooMoments {
  VectorXd mean;
  VectorXd var;
};

template <class Kernel = SquaredExponential>
LooMoments loo_moments(const VectorXd &y, const MatrixXd &X, const KernelParams &params,
                       double jitter = kDefaultJitter) {
  if (X.rows() < 2) throw DataError("leave-one-out needs n >= 2");
  const GramFactor f = build_gram<Kernel>(X, params, jitter);
  const MatrixXd Kinv = f.inverse();
  const VectorXd alpha = f.solve(y);
  LooMoments m;
  m.var = Kinv.diagonal().cwiseInverse();
  m.mean = y - alpha.cwiseProduct(m.var);
  return m;
}

/// Per-point log leave-one-out predictive densities, log N(y_i | mu_i, sigma_i^2 + kappa).
template <class Kernel = SquaredExponential>
VectorXd loopd_exact(const VectorXd &y, const MatrixXd &X, const KernelParams &params, double kappa = 0.0,
                     double jitter = kDefaultJitter) {
  if (kappa < 0.0) throw ConfigError("kappa must be nonnegative");
  const auto dims = detail::nonzero_dims(params.theta);
  KernelParams compact = params;
  compact.theta = detail::select_entries(params.theta, dims);
  const LooMoments m = loo_moments<Kernel>(y, detail::select_columns(X, dims), compact, jitter);
  VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = log_normal_pdf(y[i], m.mean[i], m.var[i] + kappa);
  return out;
}

struct MliiTrace {
  std::vector<double> objective;
  std::vector<double> noise_var;
};

/// ML-II baseline: ADAM ascent on the log marginal likelihood over theta,
/// log tau and log noise_var.
template <class Kernel = SquaredExponential>
KernelParams train_mlii(const VectorXd &y, const MatrixXd &X, const KernelParams &init, int iters, double lr,
                        double jitter = kDefaultJitter, MliiTrace *trace = nullptr) {
  if (iters < 0) throw ConfigError("train_mlii: iters must be nonnegative");
  if (iters == 0) return init;
  const Eigen::Index d = init.dim();
  std::vector<Eigen::Index> all(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) all[static_cast<std::size_t>(j)] = j;

  VectorXd packed(d + 2);
  packed << init.theta, std::log(init.tau), std::log(init.noise_var);
  AdamState adam(d + 2);
  AdamSettings settings;
  settings.lr = lr;

  KernelParams cur = init;
  for (int it = 0; it < iters; ++it) {
    cur.theta = packed.head(d);
    cur.tau = std::exp(packed[d]);
    cur.noise_var = std::exp(packed[d + 1]);
    const MarginalEval ev = evaluate_log_marginal<Kernel>(y, X, cur, all, jitter);
    if (!std::isfinite(ev.value) || !ev.grads.d_theta.allFinite() || !std::isfinite(ev.grads.d_log_tau) ||
        !std::isfinite(ev.grads.d_log_noise))
      throw NumericError("train_mlii: non-finite objective (learning rate too high?)");
    if (trace) {
      trace->objective.push_back(ev.value);
      trace->noise_var.push_back(cur.noise_var);
    }
    VectorXd grad(d + 2);
    grad << ev.grads.d_theta, ev.grads.d_log_tau, ev.grads.d_log_noise;
    adam_ascent(packed, grad, adam, settings);
  }
  cur.theta = packed.head(d);
  cur.tau = std::exp(packed[d]);
  cur.noise_var = std::exp(packed[d + 1]);
  return cur;
}

}  // namespace ssvgp
