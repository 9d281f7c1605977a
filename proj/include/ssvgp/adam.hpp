#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace ssvgp {

struct AdamSettings {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index size = 0) : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

// One bias-corrected ADAM ascent step. Coordinates with frozen[i] != 0 are
// left untouched and their moments are held at zero.
inline void adam_ascent(Eigen::VectorXd &params, const Eigen::VectorXd &grad, AdamState &state,
                        const AdamSettings &s, const std::vector<char> *frozen = nullptr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (frozen && (*frozen)[static_cast<std::size_t>(i)]) {
      state.m[i] = 0.0;
      state.v[i] = 0.0;
      continue;
    }
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * grad[i];
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    params[i] += s.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + s.eps);
  }
}

}  // namespace ssvgp
