#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ssvgp/errors.hpp"

namespace ssvgp {

/// mean((y - y_hat)^2) / Var(y), population variance.
inline double normalized_mse(const Eigen::VectorXd &y_true, const Eigen::VectorXd &y_pred) {
  if (y_true.size() != y_pred.size()) throw ConfigError("normalized_mse: length mismatch");
  if (y_true.size() < 2) throw DataError("normalized_mse: need at least two points");
  const double var = (y_true.array() - y_true.mean()).square().mean();
  if (!(var > 0.0)) throw DataError("normalized_mse: y_true has zero variance");
  return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()) / var;
}

struct SelectionOutcome {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline SelectionOutcome selection_outcome(const std::vector<char> &selected, const std::vector<char> &relevant) {
  if (selected.size() != relevant.size()) throw ConfigError("selection_outcome: length mismatch");
  SelectionOutcome o;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (selected[j] && relevant[j]) ++o.tp;
    else if (selected[j]) ++o.fp;
    else if (relevant[j]) ++o.fn;
    else ++o.tn;
  }
  return o;
}

inline double mcc(const SelectionOutcome &o) {
  const double den = static_cast<double>(o.tp + o.fp) * static_cast<double>(o.tp + o.fn) *
                     static_cast<double>(o.tn + o.fp) * static_cast<double>(o.tn + o.fn);
  if (den == 0.0) return 0.0;
  return (static_cast<double>(o.tp) * static_cast<double>(o.tn) - static_cast<double>(o.fp) * static_cast<double>(o.fn)) /
         std::sqrt(den);
}

inline double mcc(const std::vector<char> &selected, const std::vector<char> &relevant) {
  return mcc(selection_outcome(selected, relevant));
}

inline std::vector<char> indicator(Eigen::Index d, const std::vector<Eigen::Index> &members) {
  std::vector<char> out(static_cast<std::size_t>(d), 0);
  for (auto j : members) {
    if (j < 0 || j >= d) throw ConfigError("index out of range");
    out[static_cast<std::size_t>(j)] = 1;
  }
  return out;
}

inline std::vector<char> threshold_selection(const Eigen::VectorXd &values, double threshold = 0.5) {
  std::vector<char> out(static_cast<std::size_t>(values.size()));
  for (Eigen::Index j = 0; j < values.size(); ++j) out[static_cast<std::size_t>(j)] = values[j] > threshold;
  return out;
}

/// Size-ordered profile averaged over trials: in each trial the relevant
/// values, sorted descending, fill the leading positions and the irrelevant
/// values, sorted descending, fill the rest.
inline Eigen::VectorXd pip_profile(const std::vector<Eigen::VectorXd> &trials, const std::vector<Eigen::Index> &relevant) {
  if (trials.empty()) throw ConfigError("pip_profile: no trials");
  const Eigen::Index d = trials.front().size();
  const auto is_rel = indicator(d, relevant);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
  for (const auto &t : trials) {
    if (t.size() != d) throw ConfigError("pip_profile: inconsistent dimension across trials");
    std::vector<double> rel, irr;
    for (Eigen::Index j = 0; j < d; ++j) (is_rel[static_cast<std::size_t>(j)] ? rel : irr).push_back(t[j]);
    std::sort(rel.begin(), rel.end(), std::greater<>());
    std::sort(irr.begin(), irr.end(), std::greater<>());
    Eigen::Index pos = 0;
    for (double v : rel) acc[pos++] += v;
    for (double v : irr) acc[pos++] += v;
  }
  return acc / static_cast<double>(trials.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of empty list");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double mean(const std::vector<double> &v) {
  if (v.empty()) throw ConfigError("mean of empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double> &v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace ssvgp
