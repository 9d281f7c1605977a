#pragma once

// Bayesian model averaging over a grid of spike precisions v. Each model is
// trained independently; models are weighted by their leave-one-out
// predictive density (exact for small n, nearest-neighbour truncated for
// large n) and combined as a moment-matched predictive mixture.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/errors.hpp"
#include "ssvgp/gp.hpp"
#include "ssvgp/neighbors.hpp"
#include "ssvgp/parallel.hpp"
#include "ssvgp/variational.hpp"

namespace ssvgp {

inline constexpr Eigen::Index kLoopdExactCutoff = 2000;

/// count values log2-equispaced over center * [1/span, span].
inline std::vector<double> v_grid(double center = 1e4, double span = 1000.0, int count = 11) {
  if (count < 1) throw ConfigError("v_grid: count must be >= 1");
  if (!(center > 0.0)) throw ConfigError("v_grid: center must be positive");
  if (count == 1) return {center};
  if (!(span > 1.0)) throw ConfigError("v_grid: span must exceed 1");
  const double l = std::log2(span);
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = center * std::exp2(-l + 2.0 * l * k / (count - 1));
  return grid;
}

struct ModelResult {
  SpikeSlabHyper hyper;
  VariationalState state;
  std::vector<char> selected;  // lambda > 0.5
  double log_loopd = 0.0;
  std::optional<double> sub_loopd;
  double train_seconds = 0.0;
  double loopd_seconds = 0.0;
};

inline std::vector<char> selected_from(const VectorXd &lambda, double threshold = 0.5) {
  std::vector<char> s(static_cast<std::size_t>(lambda.size()));
  for (Eigen::Index j = 0; j < lambda.size(); ++j) s[static_cast<std::size_t>(j)] = lambda[j] > threshold;
  return s;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Seed for the model with spike precision v. Keyed on the value of v rather
/// than its grid position, so a repeated v reproduces the same model.
inline std::uint64_t model_seed(std::uint64_t seed, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return detail::splitmix64(detail::splitmix64(seed) ^ bits);
}

/// Trains one model per grid value. A model whose training throws is
/// dropped with a warning; if every model fails the first error propagates.
inline std::vector<ModelResult> train_ensemble(const VectorXd &y, const MatrixXd &X, const std::vector<double> &grid,
                                               const TrainConfig &config, const SpikeSlabHyper &base = {},
                                               int threads = 1, std::vector<std::string> *warnings = nullptr) {
  if (grid.empty()) throw ConfigError("train_ensemble: empty v grid");
  std::vector<std::optional<ModelResult>> slots(grid.size());
  std::vector<std::string> errors(grid.size());
  std::exception_ptr first_error;
  std::vector<std::exception_ptr> eptrs(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t k) {
    SpikeSlabHyper hyper = base;
    hyper.v = grid[k];
    TrainConfig cfg = config;
    cfg.seed = model_seed(config.seed, hyper.v);
    try {
      TrainTrace trace;
      ModelResult r;
      r.hyper = hyper;
      r.state = acavi_train(y, X, hyper, cfg, &trace);
      r.selected = selected_from(r.state.lambda);
      r.train_seconds = trace.seconds;
      slots[k] = std::move(r);
    } catch (const ConfigError &) {
      throw;
    } catch (const std::exception &e) {
      errors[k] = e.what();
      eptrs[k] = std::current_exception();
    }
  });
  std::vector<ModelResult> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (slots[k]) {
      out.push_back(std::move(*slots[k]));
    } else {
      const std::string msg = "model with v=" + std::to_string(grid[k]) + " dropped: " + errors[k];
      if (warnings) warnings->push_back(msg);
      std::cerr << "warning: " << msg << "\n";
      if (!first_error) first_error = eptrs[k];
    }
  }
  if (out.empty() && first_error) std::rethrow_exception(first_error);
  return out;
}

/// Neighbour index under the kernel metric |theta| over nonzero dimensions.
inline NnIndex kernel_metric_index(const MatrixXd &X, const VectorXd &theta) {
  return NnIndex(X, theta.cwiseAbs(), detail::nonzero_dims(theta));
}

/// Per-point log predictive densities where point i is predicted from its
/// m_tilde nearest neighbours (itself excluded) instead of all other points.
inline VectorXd loopd_truncated_terms(const VectorXd &y, const MatrixXd &X, const KernelParams &params,
                                      const NnIndex &index, Eigen::Index m_tilde, double kappa = 0.0,
                                      double jitter = kDefaultJitter, int threads = 1) {
  const Eigen::Index n = X.rows();
  if (m_tilde < 1 || m_tilde >= n) throw ConfigError("loopd_truncated: need 1 <= m_tilde < n");
  if (kappa < 0.0) throw ConfigError("kappa must be nonnegative");
  if (index.size() != n) throw ConfigError("loopd_truncated: index built on a different dataset");
  VectorXd out(n);
  const int chunks = std::max(1, threads);
  parallel_for(static_cast<std::size_t>(chunks), chunks, [&](std::size_t c) {
    for (Eigen::Index i = static_cast<Eigen::Index>(c); i < n; i += chunks) {
      const auto nn = index.query(X.row(i).transpose(), m_tilde, i);
      const Prediction p = gp_predict(detail::select_rows(X, nn), detail::select_entries(y, nn), X.row(i), params, jitter);
      out[i] = log_normal_pdf(y[i], p.mean[0], p.var[0] + kappa);
    }
  });
  return out;
}

inline double loopd_truncated(const VectorXd &y, const MatrixXd &X, const KernelParams &params, const NnIndex &index,
                              Eigen::Index m_tilde, double kappa = 0.0, double jitter = kDefaultJitter, int threads = 1) {
  return loopd_truncated_terms(y, X, params, index, m_tilde, kappa, jitter, threads).sum();
}

/// Softmax of log LOOPD scores (uniform model prior).
inline VectorXd compute_weights(const std::vector<double> &log_loopds) {
  if (log_loopds.empty()) throw ConfigError("compute_weights: empty list");
  for (double v : log_loopds)
    if (!std::isfinite(v)) throw NumericError("compute_weights: non-finite log LOOPD");
  const double mx = *std::max_element(log_loopds.begin(), log_loopds.end());
  VectorXd w(static_cast<Eigen::Index>(log_loopds.size()));
  for (std::size_t k = 0; k < log_loopds.size(); ++k) w[static_cast<Eigen::Index>(k)] = std::exp(log_loopds[k] - mx);
  return w / w.sum();
}

/// w~ = z / S with z ~ Multinomial(S, w), drawn as a chain of binomials.
inline VectorXd threshold_weights(const VectorXd &w, int S, Rng &rng) {
  if (S < 1) throw ConfigError("threshold_weights: S must be >= 1");
  VectorXd out = VectorXd::Zero(w.size());
  int remaining = S;
  double mass = 1.0;
  for (Eigen::Index k = 0; k < w.size() && remaining > 0; ++k) {
    int z;
    if (k == w.size() - 1 || mass <= w[k]) {
      z = remaining;
    } else {
      const double p = std::clamp(w[k] / mass, 0.0, 1.0);
      z = std::binomial_distribution<int>(remaining, p)(rng);
    }
    out[k] = static_cast<double>(z) / S;
    remaining -= z;
    mass -= w[k];
  }
  return out;
}

/// Keeps one model per distinct selected set: the one with the highest
/// exact LOOPD on a shared random subset of subset_n training points.
inline std::vector<ModelResult> compress_models(std::vector<ModelResult> models, const VectorXd &y, const MatrixXd &X,
                                                Eigen::Index subset_n, Rng &rng, double kappa = 0.0,
                                                double jitter = kDefaultJitter) {
  const Eigen::Index n = X.rows();
  if (subset_n < 2) throw ConfigError("compress_models: subset_n must be >= 2");
  subset_n = std::min(subset_n, n);
  auto rows = detail::sample_without_replacement(n, subset_n, rng);
  std::sort(rows.begin(), rows.end());
  const MatrixXd Xs = detail::select_rows(X, rows);
  const VectorXd ys = detail::select_entries(y, rows);

  std::map<std::vector<char>, std::size_t> best;  // selected set -> model position
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (!models[k].sub_loopd)
      models[k].sub_loopd = loopd_exact(ys, Xs, models[k].state.kernel_params(), kappa, jitter).sum();
    auto [it, fresh] = best.emplace(models[k].selected, k);
    if (!fresh && *models[k].sub_loopd > *models[it->second].sub_loopd) it->second = k;
  }
  std::vector<char> keep(models.size(), 0);
  for (const auto &[set, k] : best) keep[k] = 1;
  std::vector<ModelResult> out;
  for (std::size_t k = 0; k < models.size(); ++k)
    if (keep[k]) out.push_back(std::move(models[k]));
  return out;
}

enum class PredictMode { Average, Best };
enum class LoopdMode { Auto, Exact, Truncated };

inline PredictMode predict_mode_from_string(const std::string &s) {
  if (s == "average") return PredictMode::Average;
  if (s == "best") return PredictMode::Best;
  throw ConfigError("unknown prediction mode '" + s + "' (expected average or best)");
}
inline const char *to_string(PredictMode m) { return m == PredictMode::Best ? "best" : "average"; }

inline LoopdMode loopd_mode_from_string(const std::string &s) {
  if (s == "auto") return LoopdMode::Auto;
  if (s == "exact") return LoopdMode::Exact;
  if (s == "truncated") return LoopdMode::Truncated;
  throw ConfigError("unknown LOOPD mode '" + s + "' (expected auto, exact or truncated)");
}
inline const char *to_string(LoopdMode m) {
  return m == LoopdMode::Exact ? "exact" : (m == LoopdMode::Truncated ? "truncated" : "auto");
}

struct FitSettings {
  std::vector<double> grid = v_grid();
  SpikeSlabHyper base_hyper;
  PredictMode mode = PredictMode::Average;
  int threshold_S = 0;  // 0 disables thresholding
  LoopdMode loopd_mode = LoopdMode::Auto;
  Eigen::Index loopd_exact_cutoff = kLoopdExactCutoff;
  Eigen::Index m_tilde = 64;
  bool compress = false;
  Eigen::Index subset_n = 1000;
  double kappa = 0.0;
  int mfg_predict_samples = 100;
  int threads = 1;
};

struct Ensemble {
  std::vector<ModelResult> models;
  VectorXd weights;             // normalised LOOPD weights
  VectorXd prediction_weights;  // after optional thresholding
  VectorXd marginal_pips;
  PosteriorKind posterior = PosteriorKind::ZeroTemperature;
  double jitter = kDefaultJitter;
  int mfg_predict_samples = 100;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;
  double loopd_seconds = 0.0;
  std::vector<std::string> warnings;

  std::size_t best_index() const {
    Eigen::Index k = 0;
    weights.maxCoeff(&k);
    return static_cast<std::size_t>(k);
  }
};

inline VectorXd marginal_pips(const std::vector<ModelResult> &models, const VectorXd &w) {
  VectorXd out = VectorXd::Zero(models.front().state.dim());
  for (std::size_t k = 0; k < models.size(); ++k) out += w[static_cast<Eigen::Index>(k)] * models[k].state.lambda;
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

/// train_ensemble, then optional compression, LOOPD scoring, weights,
/// optional thresholding, and marginal PIPs. Marginal PIPs use the
/// unthresholded weights.
inline Ensemble fit(const VectorXd &y, const MatrixXd &X, const TrainConfig &config, const FitSettings &settings) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw DataError("fit: need at least two training rows");
  Ensemble ens;
  ens.posterior = config.posterior;
  ens.jitter = config.jitter;
  ens.mfg_predict_samples = settings.mfg_predict_samples;
  ens.seed = config.seed;

  auto t0 = std::chrono::steady_clock::now();
  ens.models = train_ensemble(y, X, settings.grid, config, settings.base_hyper, settings.threads, &ens.warnings);
  ens.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  t0 = std::chrono::steady_clock::now();
  Rng rng(detail::splitmix64(config.seed ^ 0x5bd1e995ULL));
  if (settings.compress && ens.models.size() > 1)
    ens.models = compress_models(std::move(ens.models), y, X, settings.subset_n, rng, settings.kappa, config.jitter);

  const bool exact = settings.loopd_mode == LoopdMode::Exact ||
                     (settings.loopd_mode == LoopdMode::Auto && n <= settings.loopd_exact_cutoff);
  const Eigen::Index m_tilde = std::min(settings.m_tilde, n - 1);
  // Models are scored in parallel; the truncated path is itself serial per model.
  parallel_for(ens.models.size(), settings.threads, [&](std::size_t k) {
    auto &m = ens.models[k];
    const auto s0 = std::chrono::steady_clock::now();
    const KernelParams params = m.state.kernel_params();
    if (exact) {
      m.log_loopd = loopd_exact(y, X, params, settings.kappa, config.jitter).sum();
    } else {
      const NnIndex index = kernel_metric_index(X, params.theta);
      m.log_loopd = loopd_truncated(y, X, params, index, m_tilde, settings.kappa, config.jitter);
    }
    m.loopd_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
  });
  std::vector<double> scores;
  for (const auto &m : ens.models) scores.push_back(m.log_loopd);
  ens.weights = compute_weights(scores);
  ens.prediction_weights =
      settings.threshold_S > 0 ? threshold_weights(ens.weights, settings.threshold_S, rng) : ens.weights;
  ens.marginal_pips = marginal_pips(ens.models, ens.weights);
  ens.loopd_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return ens;
}

/// Combines per-component predictive moments with weights w:
///   mean = sum w_k m_k,  var = sum w_k (v_k + m_k^2) - mean^2.
inline Prediction mixture_moments(const std::vector<Prediction> &parts, const VectorXd &w) {
  if (parts.empty() || static_cast<Eigen::Index>(parts.size()) != w.size())
    throw ConfigError("mixture_moments: weights and components disagree");
  const Eigen::Index m = parts.front().mean.size();
  VectorXd mean = VectorXd::Zero(m), second = VectorXd::Zero(m);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double wk = w[static_cast<Eigen::Index>(k)];
    if (wk == 0.0) continue;
    mean += wk * parts[k].mean;
    second += wk * (parts[k].var + parts[k].mean.cwiseAbs2());
  }
  return Prediction{mean, (second - mean.cwiseAbs2()).cwiseMax(0.0)};
}

namespace detail {

// MFG with neighbour truncation: each draw theta^(s) ~ q(theta) defines its
// own metric, so the neighbour sets are searched per draw.
inline Prediction truncated_mfg_predict(const VariationalState &state, const MatrixXd &X, const VectorXd &y,
                                        const MatrixXd &X_star, double jitter, int samples, Eigen::Index m_star,
                                        Rng &rng, int threads) {
  std::normal_distribution<double> normal;
  const Eigen::Index m = X_star.rows();
  VectorXd mean = VectorXd::Zero(m), second = VectorXd::Zero(m);
  KernelParams params = state.kernel_params();
  const int chunks = std::max(1, threads);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < state.dim(); ++j)
      params.theta[j] = state.pruned[static_cast<std::size_t>(j)] ? 0.0 : state.mu[j] + state.sigma_q[j] * normal(rng);
    const NnIndex index = kernel_metric_index(X, params.theta);
    parallel_for(static_cast<std::size_t>(chunks), chunks, [&](std::size_t c) {
      for (Eigen::Index i = static_cast<Eigen::Index>(c); i < m; i += chunks) {
        const auto nn = index.query(X_star.row(i).transpose(), m_star);
        const Prediction p = gp_predict(select_rows(X, nn), select_entries(y, nn), X_star.row(i), params, jitter);
        mean[i] += p.mean[0];
        second[i] += p.var[0] + p.mean[0] * p.mean[0];
      }
    });
  }
  mean /= samples;
  second /= samples;
  return Prediction{mean, (second - mean.cwiseAbs2()).cwiseMax(0.0)};
}

}  // namespace detail

/// Predictive moments of a single model, optionally conditioning each test
/// point only on its m_star nearest training points under the model's metric.
inline Prediction model_predict(const ModelResult &model, PosteriorKind kind, const MatrixXd &X, const VectorXd &y,
                                const MatrixXd &X_star, double jitter, int mfg_samples, std::uint64_t seed,
                                std::optional<Eigen::Index> m_star = std::nullopt, int threads = 1) {
  Rng rng(model_seed(seed ^ 0xa5a5a5a5ULL, model.hyper.v));
  if (!m_star || *m_star >= X.rows())
    return predict_state(model.state, kind, X, y, X_star, jitter, mfg_samples, rng);
  if (*m_star < 1) throw ConfigError("m_star must be >= 1");
  if (kind == PosteriorKind::MeanFieldGaussian && mfg_samples > 0)
    return detail::truncated_mfg_predict(model.state, X, y, X_star, jitter, mfg_samples, *m_star, rng, threads);
  const NnIndex index = kernel_metric_index(X, model.state.mu);
  Prediction out{VectorXd(X_star.rows()), VectorXd(X_star.rows())};
  const int chunks = std::max(1, threads);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(X_star.rows()));
  for (auto &s : seeds) s = rng();
  parallel_for(static_cast<std::size_t>(chunks), chunks, [&](std::size_t c) {
    for (Eigen::Index i = static_cast<Eigen::Index>(c); i < X_star.rows(); i += chunks) {
      const auto nn = index.query(X_star.row(i).transpose(), *m_star);
      Rng local(seeds[static_cast<std::size_t>(i)]);
      const Prediction p = predict_state(model.state, kind, detail::select_rows(X, nn), detail::select_entries(y, nn),
                                         X_star.row(i), jitter, mfg_samples, local);
      out.mean[i] = p.mean[0];
      out.var[i] = p.var[0];
    }
  });
  return out;
}

/// Mixture predictive over the ensemble (mode Average, using the possibly
/// thresholded prediction weights) or the top-weight model alone (mode Best).
inline Prediction bma_predict(const Ensemble &ens, const MatrixXd &X_star, const VectorXd &y, const MatrixXd &X,
                              PredictMode mode, std::optional<Eigen::Index> m_star = std::nullopt, int threads = 1) {
  if (ens.models.empty()) throw ConfigError("bma_predict: empty ensemble");
  if (X_star.cols() != X.cols()) throw ConfigError("bma_predict: test inputs have the wrong number of columns");
  auto one = [&](std::size_t k) {
    return model_predict(ens.models[k], ens.posterior, X, y, X_star, ens.jitter, ens.mfg_predict_samples, ens.seed,
                         m_star, threads);
  };
  if (mode == PredictMode::Best || ens.models.size() == 1) return one(mode == PredictMode::Best ? ens.best_index() : 0);
  std::vector<Prediction> parts(ens.models.size());
  for (std::size_t k = 0; k < ens.models.size(); ++k)
    if (ens.prediction_weights[static_cast<Eigen::Index>(k)] > 0.0) parts[k] = one(k);
    else parts[k] = Prediction{VectorXd::Zero(X_star.rows()), VectorXd::Zero(X_star.rows())};
  return mixture_moments(parts, ens.prediction_weights);
}

}  // namespace ssvgp
