#pragma once

#include <cmath>

#include "ssvgp/errors.hpp"

namespace ssvgp {

// Digamma for x > 0: shift with psi(x) = psi(x + 1) - 1/x until x >= 10, then
// the asymptotic series in 1/x^2 (Bernoulli coefficients through B_14).
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("digamma: argument must be positive and finite");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv2 = 1.0 / (x * x);
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return shift + std::log(x) - 0.5 / x - series;
}

}  // namespace ssvgp
