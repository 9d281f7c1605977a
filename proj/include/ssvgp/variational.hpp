#pragma once

// Spike-and-slab variational inference over inverse lengthscales:
// closed-form updates for q(gamma) and q(pi), KL gradients, the
// reparameterised likelihood gradient, dropout pruning, and the a-CAVI
// outer loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/adam.hpp"
#include "ssvgp/errors.hpp"
#include "ssvgp/gp.hpp"
#include "ssvgp/kernel.hpp"
#include "ssvgp/neighbors.hpp"
#include "ssvgp/special.hpp"

namespace ssvgp {

struct SpikeSlabHyper {
  double v = 1e4;   // spike precision
  double c = 1e-8;  // slab precision is c * v
  double a = 1e-3;
  double b = 1e-3;

  void validate() const {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("spike precision v must be positive");
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("slab ratio c must lie in (0, 1)");
    if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("Beta hyperparameters a, b must be positive");
  }
};

enum class PosteriorKind { MeanFieldGaussian, ZeroTemperature };

inline const char *to_string(PosteriorKind k) { return k == PosteriorKind::ZeroTemperature ? "zt" : "mfg"; }

inline PosteriorKind posterior_kind_from_string(const std::string &s) {
  if (s == "zt") return PosteriorKind::ZeroTemperature;
  if (s == "mfg") return PosteriorKind::MeanFieldGaussian;
  throw ConfigError("unknown posterior kind '" + s + "' (expected zt or mfg)");
}

struct TrainConfig {
  int K_iters = 5;
  int T_first = 200;
  int T_rest = 100;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int S_mc = 1;
  double prune_eps = 0.5;
  bool pruning = true;
  std::optional<Eigen::Index> minibatch_m;  // empty means full batch
  Eigen::Index nn_pool = kDefaultPoolCap;
  PosteriorKind posterior = PosteriorKind::ZeroTemperature;
  std::uint64_t seed = 0;
  double jitter = kDefaultJitter;

  void validate(Eigen::Index n) const {
    if (K_iters < 1) throw ConfigError("K_iters must be >= 1");
    if (T_first < 1 || T_rest < 1) throw ConfigError("T_first and T_rest must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("ADAM betas must lie in [0, 1)");
    if (S_mc < 1) throw ConfigError("S_mc must be >= 1");
    if (!(prune_eps > 0.0 && prune_eps < 1.0)) throw ConfigError("prune_eps must lie in (0, 1)");
    if (minibatch_m && (*minibatch_m < 1 || *minibatch_m > n)) throw ConfigError("minibatch size must lie in [1, n]");
    if (minibatch_m && nn_pool < *minibatch_m) throw ConfigError("nn_pool must be >= minibatch size");
    if (jitter < 0.0) throw ConfigError("jitter must be nonnegative");
  }
};

struct VariationalState {
  VectorXd mu;
  VectorXd sigma_q;
  VectorXd lambda;
  double xi_a = 1.0;
  double xi_b = 1.0;
  double tau = 1.0;
  double noise_var = 1.0;
  std::vector<char> pruned;
  // Packed as [mu (d), log sigma_q (d), log tau, log noise_var].
  AdamState adam;

  Eigen::Index dim() const { return mu.size(); }

  std::vector<Eigen::Index> active_dims() const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index j = 0; j < dim(); ++j)
      if (!pruned[static_cast<std::size_t>(j)]) out.push_back(j);
    return out;
  }

  Eigen::Index active_count() const {
    return static_cast<Eigen::Index>(std::count(pruned.begin(), pruned.end(), 0));
  }

  /// <theta_j^2> under q(theta).
  VectorXd expected_theta_sq() const { return mu.cwiseAbs2() + sigma_q.cwiseAbs2(); }

  KernelParams kernel_params() const { return KernelParams{mu, tau, noise_var, KernelId::SquaredExponential}; }
};

/// Default initial state: mu = d^{-1/2}, sigma_q = 2e-3 (0 under ZT),
/// lambda = 1, xi = (1, 1), tau = noise_var = 1.
inline VariationalState initial_state(Eigen::Index d, PosteriorKind kind) {
  if (d < 1) throw DataError("need at least one input dimension");
  VariationalState s;
  s.mu = VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  s.sigma_q = VectorXd::Constant(d, kind == PosteriorKind::MeanFieldGaussian ? 2e-3 : 0.0);
  s.lambda = VectorXd::Ones(d);
  s.pruned.assign(static_cast<std::size_t>(d), 0);
  s.adam = AdamState(2 * d + 2);
  return s;
}

namespace detail {

inline double stable_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// <log((1 - pi) / pi)> under q(pi) = Beta(xi_a, xi_b).
inline double expected_log_odds_against(double xi_a, double xi_b) { return digamma(xi_b) - digamma(xi_a); }

/// q(gamma) update, evaluated as a log-odds:
///   logit(lambda_j) = 0.5 log c + (v/2) <theta_j^2> (1 - c) - <log((1-pi)/pi)>.
inline VectorXd update_pips(const VectorXd &expected_theta_sq, const SpikeSlabHyper &hyper, double xi_a, double xi_b,
                            const std::vector<char> &pruned) {
  const double prior_term = expected_log_odds_against(xi_a, xi_b);
  VectorXd lambda(expected_theta_sq.size());
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    if (!pruned.empty() && pruned[static_cast<std::size_t>(j)]) {
      lambda[j] = 0.0;
      continue;
    }
    const double logit =
        0.5 * std::log(hyper.c) + 0.5 * hyper.v * expected_theta_sq[j] * (1.0 - hyper.c) - prior_term;
    lambda[j] = detail::stable_sigmoid(logit);
  }
  return lambda;
}

/// q(pi) update: (xi_a, xi_b) = (a + sum lambda, b + d - sum lambda).
inline std::pair<double, double> update_beta(const VectorXd &lambda, double a, double b) {
  const double s = lambda.sum();
  return {a + s, b + static_cast<double>(lambda.size()) - s};
}

/// Point at which the q(gamma) update gives lambda = 1/2, for a given
/// expected log-odds L = <log((1 - pi) / pi)>. Returns 0 when
/// log(1/c) + 2L <= 0, since every theta then has lambda > 1/2.
inline double ppi_from_log_odds(const SpikeSlabHyper &hyper, double log_odds_against) {
  const double num = std::log(1.0 / hyper.c) + 2.0 * log_odds_against;
  if (num <= 0.0) return 0.0;
  return std::sqrt(num / (hyper.v * (1.0 - hyper.c)));
}

inline double ppi(const SpikeSlabHyper &hyper, double xi_a, double xi_b) {
  return ppi_from_log_odds(hyper, expected_log_odds_against(xi_a, xi_b));
}

/// PPI with the prior inclusion probability held fixed at pi.
inline double ppi_fixed_pi(const SpikeSlabHyper &hyper, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must lie in (0, 1)");
  return ppi_from_log_odds(hyper, std::log((1.0 - pi) / pi));
}

struct KlGradient {
  VectorXd d_mu;
  VectorXd d_sigma;  // zero under ZT
};

/// Gradient of -KL[q(theta) q(gamma) || p(theta | gamma)] in (mu, sigma_q).
inline KlGradient kl_gradient(const VariationalState &state, const SpikeSlabHyper &hyper, PosteriorKind kind) {
  const Eigen::Index d = state.dim();
  KlGradient g{VectorXd::Zero(d), VectorXd::Zero(d)};
  for (Eigen::Index j = 0; j < d; ++j) {
    if (state.pruned[static_cast<std::size_t>(j)]) continue;
    const double prec = hyper.v * (state.lambda[j] * hyper.c + 1.0 - state.lambda[j]);
    g.d_mu[j] = -prec * state.mu[j];
    if (kind == PosteriorKind::MeanFieldGaussian) {
      if (state.sigma_q[j] == 0.0) throw NumericError("kl_gradient: zero posterior sd under the mean-field posterior");
      g.d_sigma[j] = -prec * state.sigma_q[j] + 1.0 / state.sigma_q[j];
    }
  }
  return g;
}

/// Closed-form KL[q(theta) q(gamma) || p(theta | gamma)] up to terms constant
/// in (mu, sigma_q). Used by tests and diagnostics.
inline double kl_theta(const VariationalState &state, const SpikeSlabHyper &hyper, PosteriorKind kind) {
  double kl = 0.0;
  for (Eigen::Index j = 0; j < state.dim(); ++j) {
    if (state.pruned[static_cast<std::size_t>(j)]) continue;
    const double prec = hyper.v * (state.lambda[j] * hyper.c + 1.0 - state.lambda[j]);
    const double sq = state.mu[j] * state.mu[j] + state.sigma_q[j] * state.sigma_q[j];
    kl += 0.5 * prec * sq;
    if (kind == PosteriorKind::MeanFieldGaussian) kl -= std::log(state.sigma_q[j]);
  }
  return kl;
}

/// A batch of rows from the training set plus the n/m likelihood rescale.
struct Batch {
  VectorXd y;
  MatrixXd X;
  double rescale = 1.0;
};

inline Batch make_batch(const VectorXd &y, const MatrixXd &X, const std::vector<Eigen::Index> &rows, double rescale) {
  return Batch{detail::select_entries(y, rows), detail::select_rows(X, rows), rescale};
}

struct StepInfo {
  double log_lik = 0.0;  // batch log marginal likelihood (unscaled), averaged over MC samples
  double jitter = 0.0;
};

/// One ADAM ascent step on the ELBO over (mu, log sigma_q under MFG, log tau,
/// log noise_var). The likelihood gradient is multiplied by batch.rescale;
/// the KL gradient is not.
inline StepInfo elbo_gradient_step(VariationalState &state, const Batch &batch, const SpikeSlabHyper &hyper,
                                   const TrainConfig &config, Rng &rng) {
  const Eigen::Index d = state.dim();
  const auto active = state.active_dims();
  const auto p = static_cast<Eigen::Index>(active.size());
  const bool mfg = config.posterior == PosteriorKind::MeanFieldGaussian;
  const MatrixXd Xa = detail::select_columns(batch.X, active);
  const VectorXd mu_a = detail::select_entries(state.mu, active);
  const VectorXd sd_a = detail::select_entries(state.sigma_q, active);

  VectorXd g_mu = VectorXd::Zero(p), g_sd = VectorXd::Zero(p);
  double g_tau = 0.0, g_noise = 0.0;
  StepInfo info;
  std::normal_distribution<double> normal;
  const int samples = mfg ? config.S_mc : 1;
  for (int s = 0; s < samples; ++s) {
    VectorXd eps = VectorXd::Zero(p);
    if (mfg)
      for (Eigen::Index c = 0; c < p; ++c) eps[c] = normal(rng);
    const VectorXd theta = mu_a + sd_a.cwiseProduct(eps);
    const MarginalEval ev = detail::marginal_core(batch.y, Xa, theta, state.tau, state.noise_var, config.jitter);
    if (!std::isfinite(ev.value) || !ev.grads.d_theta.allFinite() || !std::isfinite(ev.grads.d_log_tau) ||
        !std::isfinite(ev.grads.d_log_noise))
      throw NumericError("non-finite likelihood gradient");
    g_mu += ev.grads.d_theta;
    if (mfg) g_sd += ev.grads.d_theta.cwiseProduct(eps);
    g_tau += ev.grads.d_log_tau;
    g_noise += ev.grads.d_log_noise;
    info.log_lik += ev.value;
    info.jitter = std::max(info.jitter, ev.jitter);
  }
  const double scale = batch.rescale / samples;
  info.log_lik /= samples;

  const KlGradient kl = kl_gradient(state, hyper, config.posterior);
  VectorXd grad = VectorXd::Zero(2 * d + 2);
  for (Eigen::Index c = 0; c < p; ++c) {
    const Eigen::Index j = active[static_cast<std::size_t>(c)];
    grad[j] = scale * g_mu[c] + kl.d_mu[j];
    // sigma_q is optimised on the log scale: d/d log sigma = sigma d/d sigma.
    if (mfg) grad[d + j] = state.sigma_q[j] * (scale * g_sd[c] + kl.d_sigma[j]);
  }
  grad[2 * d] = scale * g_tau;
  grad[2 * d + 1] = scale * g_noise;

  std::vector<char> frozen(static_cast<std::size_t>(2 * d + 2), 0);
  for (Eigen::Index j = 0; j < d; ++j) {
    frozen[static_cast<std::size_t>(j)] = state.pruned[static_cast<std::size_t>(j)];
    frozen[static_cast<std::size_t>(d + j)] = !mfg || state.pruned[static_cast<std::size_t>(j)];
  }

  VectorXd packed(2 * d + 2);
  const VectorXd log_sd = state.sigma_q.unaryExpr([](double s) { return s > 0.0 ? std::log(s) : 0.0; });
  packed << state.mu, log_sd, std::log(state.tau), std::log(state.noise_var);
  if (state.adam.m.size() != packed.size()) state.adam = AdamState(packed.size());
  adam_ascent(packed, grad, state.adam, AdamSettings{config.lr, config.beta1, config.beta2, 1e-8}, &frozen);

  state.mu = packed.head(d);
  state.tau = std::exp(packed[2 * d]);
  state.noise_var = std::exp(packed[2 * d + 1]);
  if (mfg)
    for (Eigen::Index j = 0; j < d; ++j)
      state.sigma_q[j] = state.pruned[static_cast<std::size_t>(j)] ? 0.0 : std::exp(packed[d + j]);
  return info;
}

/// Permanently removes every dimension with lambda_j <= eps.
inline void prune(VariationalState &state, double eps) {
  for (Eigen::Index j = 0; j < state.dim(); ++j) {
    auto &flag = state.pruned[static_cast<std::size_t>(j)];
    if (flag || state.lambda[j] <= eps) {
      flag = 1;
      state.mu[j] = 0.0;
      state.sigma_q[j] = 0.0;
      state.lambda[j] = 0.0;
    }
  }
}

struct TrainTrace {
  std::vector<Eigen::Index> active_counts;  // after each outer iteration
  std::vector<double> mean_pip;
  std::vector<double> log_lik;  // last inner step of each outer iteration
  double seconds = 0.0;
};

/// a-CAVI: K outer iterations, each running T gradient steps on q(theta) and
/// the kernel hyperparameters, then the q(gamma) and q(pi) updates, then
/// (optionally) dropout pruning. With a minibatch size set, each step uses a
/// uniformly drawn seed point and its nearest neighbours under |mu|; the
/// neighbour index is rebuilt once per outer iteration.
inline VariationalState acavi_train(const VectorXd &y, const MatrixXd &X, const SpikeSlabHyper &hyper,
                                    const TrainConfig &config, VariationalState state, TrainTrace *trace = nullptr,
                                    std::optional<Rng> rng_override = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 1 || y.size() != n) throw DataError("acavi_train: y and X must have matching, nonzero row counts");
  if (state.dim() != d) throw ConfigError("acavi_train: state dimension does not match X");
  hyper.validate();
  config.validate(n);

  Rng rng = rng_override ? *rng_override : Rng(config.seed);
  const bool use_minibatch = config.minibatch_m && *config.minibatch_m < n;
  Batch full{y, X, 1.0};

  for (int k = 0; k < config.K_iters; ++k) {
    std::optional<NnIndex> index;
    if (use_minibatch) {
      std::vector<Eigen::Index> dims;
      for (auto j : state.active_dims())
        if (state.mu[j] != 0.0) dims.push_back(j);
      index.emplace(X, state.mu.cwiseAbs(), dims);
    }
    const int T = k == 0 ? config.T_first : config.T_rest;
    StepInfo info;
    for (int t = 0; t < T; ++t) {
      if (use_minibatch) {
        const Minibatch mb = sample_minibatch(*index, *config.minibatch_m, config.nn_pool, rng);
        info = elbo_gradient_step(state, make_batch(y, X, mb.member_indices, mb.rescale), hyper, config, rng);
      } else {
        info = elbo_gradient_step(state, full, hyper, config, rng);
      }
    }
    state.lambda = update_pips(state.expected_theta_sq(), hyper, state.xi_a, state.xi_b, state.pruned);
    std::tie(state.xi_a, state.xi_b) = update_beta(state.lambda, hyper.a, hyper.b);
    if (config.pruning) prune(state, config.prune_eps);
    if (trace) {
      trace->active_counts.push_back(state.active_count());
      trace->mean_pip.push_back(state.lambda.mean());
      trace->log_lik.push_back(info.log_lik);
    }
  }
  if (trace) trace->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return state;
}

inline VariationalState acavi_train(const VectorXd &y, const MatrixXd &X, const SpikeSlabHyper &hyper,
                                    const TrainConfig &config, TrainTrace *trace = nullptr) {
  return acavi_train(y, X, hyper, config, initial_state(X.cols(), config.posterior), trace);
}

/// Predictive moments of one trained model. Under ZT this is the GP
/// predictive at theta = mu; under MFG it is the moment-matched mixture of
/// GP predictives over `samples` draws theta ~ q(theta).
inline Prediction predict_state(const VariationalState &state, PosteriorKind kind, const MatrixXd &X,
                                const VectorXd &y, const MatrixXd &X_star, double jitter, int samples, Rng &rng) {
  KernelParams params = state.kernel_params();
  if (kind == PosteriorKind::ZeroTemperature || samples <= 0) return gp_predict(X, y, X_star, params, jitter);
  std::normal_distribution<double> normal;
  const Eigen::Index m = X_star.rows();
  VectorXd mean = VectorXd::Zero(m), second = VectorXd::Zero(m);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < state.dim(); ++j)
      params.theta[j] = state.pruned[static_cast<std::size_t>(j)] ? 0.0 : state.mu[j] + state.sigma_q[j] * normal(rng);
    const Prediction p = gp_predict(X, y, X_star, params, jitter);
    mean += p.mean;
    second += p.var + p.mean.cwiseAbs2();
  }
  mean /= samples;
  second /= samples;
  return Prediction{mean, (second - mean.cwiseAbs2()).cwiseMax(0.0)};
}

}  // namespace ssvgp
