// Minimal library walk-through: generate the toy design, fit the ensemble,
// report the selected inputs and the test error.

#include <iostream>

#include "ssvgp/ssvgp.hpp"

int main() {
  using namespace ssvgp;

  const SplitData raw = generate_split(DesignSpec{DesignId::Toy, 300, 100, 100, 0.05, 0.0, false, 7});
  const Standardization st = fit_standardization(raw.train);
  const Dataset train = apply_standardization(raw.train, st);
  const Dataset test = apply_standardization(raw.test, st);

  TrainConfig config;
  config.lr = 0.005;
  config.minibatch_m = train.n() / 4;
  config.seed = 7;
  FitSettings settings;
  settings.kappa = 0.1;

  const Ensemble ens = fit(train.y, train.X, config, settings);
  const Prediction pred = bma_predict(ens, test.X, train.y, train.X, PredictMode::Average);

  std::cout << "selected:";
  for (Eigen::Index j = 0; j < train.d(); ++j)
    if (ens.marginal_pips[j] > 0.5) std::cout << ' ' << train.feature_names[static_cast<std::size_t>(j)];
  std::cout << "\nnormalized test MSE: " << normalized_mse(test.y, pred.mean) << '\n';
}
