#pragma once

// Seeded benchmark recipes on the synthetic designs: the toy design, the
// additive high-dimensional design (with an ML-II baseline) and a desk-scale
// version of the large interactive design.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/data.hpp"
#include "ssvgp/ensemble.hpp"
#include "ssvgp/gp.hpp"
#include "ssvgp/metrics.hpp"
#include "ssvgp/parallel.hpp"
#include "ssvgp/variational.hpp"

namespace ssvgp {

struct Recipe {
  std::string name;
  DesignSpec design;
  TrainConfig train;
  FitSettings fit;
  std::optional<Eigen::Index> predict_m_star;
  bool mse_against_latent = false;
  bool run_mlii = false;
  int mlii_iters = 1000;
  double mlii_lr = 0.1;
};

inline Recipe make_recipe(const std::string &name) {
  Recipe r;
  r.name = name;
  if (name == "toy") {
    r.design = DesignSpec{DesignId::Toy, 300, 100, 100, 0.05, 0.0, false, 0};
    // At 0.05 the large-v members overfit their lengthscales and win the
    // LOOPD weighting; 0.005 keeps them close to the sparse members.
    r.train.lr = 0.005;
    r.train.minibatch_m = 300 / 4;
    r.fit.kappa = 0.1;
  } else if (name == "experiment1") {
    r.design = DesignSpec{DesignId::Savitsky, 100, 1000, 20, 0.05, 0.0, false, 0};
    r.train.lr = 0.05;
    r.train.minibatch_m = 100 / 2;
    r.run_mlii = true;
  } else if (name == "experiment2-scaled") {
    r.design = DesignSpec{DesignId::Interactive, 4000, 500, 2500, 1.0 / 3.0, 0.5, true, 0};
    r.train.lr = 0.01;
    r.train.minibatch_m = 256;
    r.fit.mode = PredictMode::Best;
    r.fit.compress = true;
    r.predict_m_star = 256;
    r.mse_against_latent = true;
  } else {
    throw ConfigError("unknown recipe '" + name + "' (expected toy, experiment1 or experiment2-scaled)");
  }
  return r;
}

struct TrialResult {
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mcc = 0.0;
  double runtime = 0.0;  // SSVGP fit plus prediction, seconds
  double train_seconds = 0.0;
  double loopd_seconds = 0.0;
  double predict_seconds = 0.0;
  std::optional<double> mlii_runtime;
  std::optional<double> mlii_mse;
  std::optional<double> mlii_mcc;
  VectorXd marginal_pips;
  VectorXd lengthscale_profile;  // sum_k w_k |mu_k|
  std::vector<Eigen::Index> relevant;
  std::size_t models = 0;
};

inline std::uint64_t trial_seed(std::uint64_t base, int trial) {
  return detail::splitmix64(base + 0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(trial + 1));
}

// Thresholds for ML-II selection on |theta|: the best of 0.1^{0, 0.5, 1, 1.5, 2}.
inline double best_threshold_mcc(const VectorXd &theta_abs, const std::vector<char> &relevant) {
  double best = -1.0;
  for (double e : {0.0, 0.5, 1.0, 1.5, 2.0}) best = std::max(best, mcc(threshold_selection(theta_abs, std::pow(0.1, e)), relevant));
  return best;
}

inline TrialResult run_trial(const Recipe &recipe, std::uint64_t seed, int threads = 1) {
  DesignSpec spec = recipe.design;
  spec.seed = seed;
  const SplitData raw = generate_split(spec);
  const Standardization st = fit_standardization(raw.train);
  const Dataset train = apply_standardization(raw.train, st);
  const Dataset test = apply_standardization(raw.test, st);

  TrainConfig cfg = recipe.train;
  cfg.seed = seed;
  FitSettings fs = recipe.fit;
  fs.threads = threads;

  TrialResult r;
  r.seed = seed;
  r.relevant = train.relevant_set.value_or(std::vector<Eigen::Index>{});
  const auto rel = indicator(train.d(), r.relevant);
  const VectorXd &target = recipe.mse_against_latent ? test.f : test.y;

  const auto t0 = std::chrono::steady_clock::now();
  const Ensemble ens = fit(train.y, train.X, cfg, fs);
  const auto t1 = std::chrono::steady_clock::now();
  const Prediction pred = bma_predict(ens, test.X, train.y, train.X, fs.mode, recipe.predict_m_star, threads);
  const auto t2 = std::chrono::steady_clock::now();

  r.train_seconds = ens.train_seconds;
  r.loopd_seconds = ens.loopd_seconds;
  r.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
  r.runtime = std::chrono::duration<double>(t2 - t0).count();
  r.mse = normalized_mse(target, pred.mean);
  r.marginal_pips = ens.marginal_pips;
  r.mcc = mcc(threshold_selection(ens.marginal_pips), rel);
  r.models = ens.models.size();
  r.lengthscale_profile = VectorXd::Zero(train.d());
  for (std::size_t k = 0; k < ens.models.size(); ++k)
    r.lengthscale_profile += ens.weights[static_cast<Eigen::Index>(k)] * ens.models[k].state.mu.cwiseAbs();

  if (recipe.run_mlii) {
    KernelParams init{VectorXd::Constant(train.d(), 1.0 / std::sqrt(static_cast<double>(train.d()))), 1.0, 1.0,
                      KernelId::SquaredExponential};
    const auto m0 = std::chrono::steady_clock::now();
    const KernelParams p = train_mlii(train.y, train.X, init, recipe.mlii_iters, recipe.mlii_lr, cfg.jitter);
    const Prediction mp = gp_predict(train.X, train.y, test.X, p, cfg.jitter);
    r.mlii_runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
    r.mlii_mse = normalized_mse(target, mp.mean);
    r.mlii_mcc = best_threshold_mcc(p.theta.cwiseAbs(), rel);
  }
  return r;
}

struct BenchmarkSummary {
  std::string recipe;
  std::vector<TrialResult> trials;
  VectorXd pip_profile;
  VectorXd lengthscale_profile;
};

/// Trials run in order; each trial seeds from (seed, trial index) so results
/// do not depend on the thread count.
inline BenchmarkSummary run_benchmark(const Recipe &recipe, int trials, std::uint64_t seed, int threads = 1) {
  if (trials < 1) throw ConfigError("benchmark: trials must be >= 1");
  BenchmarkSummary s;
  s.recipe = recipe.name;
  for (int t = 0; t < trials; ++t) s.trials.push_back(run_trial(recipe, trial_seed(seed, t), threads));
  std::vector<VectorXd> pips, ls;
  for (const auto &t : s.trials) {
    pips.push_back(t.marginal_pips);
    ls.push_back(t.lengthscale_profile);
  }
  s.pip_profile = ssvgp::pip_profile(pips, s.trials.front().relevant);
  s.lengthscale_profile = ssvgp::pip_profile(ls, s.trials.front().relevant);
  return s;
}

}  // namespace ssvgp
