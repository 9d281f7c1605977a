#pragma once

// Datasets: synthetic designs, CSV input/output, standardisation and the
// Box-Cox response transform.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "ssvgp/errors.hpp"

namespace ssvgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  VectorXd y;
  MatrixXd X;
  VectorXd f;  // noiseless signal, synthetic designs only (empty otherwise)
  double y_mean = 0.0;
  double y_sd = 1.0;
  VectorXd x_means;
  VectorXd x_sds;
  std::optional<double> boxcox_lambda;
  double boxcox_shift = 0.0;
  std::optional<std::vector<Index>> relevant_set;  // 0-based column indices
  std::vector<Index> dropped_columns;              // relative to the original columns
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  double noise_var = 0.0;  // synthetic designs: variance of the added noise

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }
};

enum class DesignId { Toy, Savitsky, Interactive };

inline const char *to_string(DesignId id) {
  switch (id) {
    case DesignId::Toy:
      return "toy";
    case DesignId::Savitsky:
      return "savitsky";
    case DesignId::Interactive:
      return "interactive";
  }
  return "unknown";
}

inline DesignId design_from_string(const std::string &s) {
  if (s == "toy") return DesignId::Toy;
  if (s == "savitsky") return DesignId::Savitsky;
  if (s == "interactive") return DesignId::Interactive;
  throw ConfigError("unknown design '" + s + "' (expected toy, savitsky or interactive)");
}

namespace detail {

inline double sample_var(const VectorXd &v) {
  if (v.size() == 0) return 0.0;
  return (v.array() - v.mean()).square().mean();
}

inline std::vector<std::string> default_names(Index d) {
  std::vector<std::string> names;
  for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

inline Dataset finish_synthetic(MatrixXd X, VectorXd f, double noise_var, std::vector<Index> relevant,
                                std::mt19937_64 &rng) {
  Dataset ds;
  ds.noise_var = noise_var;
  std::normal_distribution<double> normal(0.0, std::sqrt(noise_var));
  ds.y = f;
  if (noise_var > 0.0)
    for (Index i = 0; i < ds.y.size(); ++i) ds.y[i] += normal(rng);
  ds.feature_names = default_names(X.cols());
  ds.x_means = VectorXd::Zero(X.cols());
  ds.x_sds = VectorXd::Ones(X.cols());
  ds.X = std::move(X);
  ds.f = std::move(f);
  ds.relevant_set = std::move(relevant);
  return ds;
}

}  // namespace detail

/// y = sum_{j<5} sin(a_j x_j) + eps with a = linspace(0.5, 1, 5), x ~ N(0, I).
/// The noise variance is nsr times the sample variance of the signal, unless
/// fixed_noise_var is given.
inline Dataset gen_toy(Index n, Index d, double nsr, std::uint64_t seed,
                       std::optional<double> fixed_noise_var = std::nullopt) {
  if (d < 5) throw ConfigError("toy design needs d >= 5");
  if (n < 1) throw ConfigError("toy design needs n >= 1");
  if (nsr < 0.0) throw ConfigError("noise-to-signal ratio must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = normal(rng);
  VectorXd f = VectorXd::Zero(n);
  for (Index j = 0; j < 5; ++j) {
    const double a = 0.5 + 0.125 * static_cast<double>(j);
    f += X.col(j).unaryExpr([a](double x) { return std::sin(a * x); });
  }
  const double nv = fixed_noise_var.value_or(nsr * detail::sample_var(f));
  return detail::finish_synthetic(std::move(X), std::move(f), nv, {0, 1, 2, 3, 4}, rng);
}

/// y = x1 + x2 + x3 + x4 + sin(3 x5) + sin(5 x6) + eps, x ~ U[0,1]^d,
/// eps ~ N(0, noise_sd^2).
inline Dataset gen_savitsky(Index n, Index d, double noise_sd, std::uint64_t seed) {
  if (d < 6) throw ConfigError("savitsky design needs d >= 6");
  if (n < 1) throw ConfigError("savitsky design needs n >= 1");
  if (noise_sd < 0.0) throw ConfigError("noise sd must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = unif(rng);
  VectorXd f(n);
  for (Index i = 0; i < n; ++i)
    f[i] = X(i, 0) + X(i, 1) + X(i, 2) + X(i, 3) + std::sin(3.0 * X(i, 4)) + std::sin(5.0 * X(i, 5));
  return detail::finish_synthetic(std::move(X), std::move(f), noise_sd * noise_sd, {0, 1, 2, 3, 4, 5}, rng);
}

inline double interactive_signal(double x1, double x2) {
  const double pi = std::numbers::pi;
  return std::tan(x1) + std::tan(x2) + std::sin(2 * pi * x1) + std::sin(2 * pi * x2) +
         std::cos(4 * pi * pi * x1 * x2) + std::tan(x1 * x2);
}

/// Two relevant inputs x1, x2 ~ U[0,1] plus d-2 noise inputs, each with
/// correlation rho to x1, x2 and to one another through a Gaussian copula.
/// With grid_test the (x1, x2) pairs form a sqrt(n) x sqrt(n) grid on [0,1]^2.
inline Dataset gen_interactive(Index n, Index d, double nsr, double rho, std::uint64_t seed, bool grid_test = false,
                               std::optional<double> fixed_noise_var = std::nullopt) {
  if (d < 2) throw ConfigError("interactive design needs d >= 2");
  if (n < 1) throw ConfigError("interactive design needs n >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (nsr < 0.0) throw ConfigError("noise-to-signal ratio must be nonnegative");
  const Index m = d - 2;
  // Noise block given (g1, g2): mean rho (g1 + g2) 1, covariance a I + c 1 1^T.
  const double a = 1.0 - rho;
  const double c = rho - 2.0 * rho * rho;
  if (m > 0 && !(a + static_cast<double>(m) * c > 0.0))
    throw ConfigError("copula covariance is not positive definite (rho too large for this d)");
  const double beta = m > 0 ? (-std::sqrt(a) + std::sqrt(a + static_cast<double>(m) * c)) / static_cast<double>(m) : 0.0;

  Index side = 0;
  if (grid_test) {
    side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw ConfigError("grid test design needs n to be a perfect square");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  const boost::math::normal_distribution<double> phi;
  constexpr double edge = 1e-12;

  MatrixXd X(n, d);
  VectorXd e(m);
  for (Index i = 0; i < n; ++i) {
    double x1, x2;
    if (grid_test) {
      const double step = side > 1 ? 1.0 / static_cast<double>(side - 1) : 0.0;
      x1 = static_cast<double>(i / side) * step;
      x2 = static_cast<double>(i % side) * step;
    } else {
      x1 = unif(rng);
      x2 = unif(rng);
    }
    X(i, 0) = x1;
    X(i, 1) = x2;
    if (m == 0) continue;
    const double g1 = boost::math::quantile(phi, std::clamp(x1, edge, 1.0 - edge));
    const double g2 = boost::math::quantile(phi, std::clamp(x2, edge, 1.0 - edge));
    for (Index k = 0; k < m; ++k) e[k] = normal(rng);
    const double shift = rho * (g1 + g2) + beta * e.sum();
    for (Index k = 0; k < m; ++k) X(i, 2 + k) = boost::math::cdf(phi, shift + std::sqrt(a) * e[k]);
  }
  VectorXd f(n);
  for (Index i = 0; i < n; ++i) f[i] = interactive_signal(X(i, 0), X(i, 1));
  const double nv = fixed_noise_var.value_or(nsr * detail::sample_var(f));
  return detail::finish_synthetic(std::move(X), std::move(f), nv, {0, 1}, rng);
}

struct DesignSpec {
  DesignId design = DesignId::Toy;
  Index n = 300;
  Index d = 100;
  Index n_test = 100;
  double noise = 0.05;  // nsr for toy/interactive, noise sd for savitsky
  double rho = 0.5;
  bool grid_test = false;
  std::uint64_t seed = 0;
};

struct SplitData {
  Dataset train;
  Dataset test;
};

/// Train and test sets drawn from the same design. The test set reuses the
/// training noise variance; with grid_test the interactive design places
/// test (x1, x2) on a regular grid.
inline SplitData generate_split(const DesignSpec &spec) {
  const std::uint64_t test_seed = spec.seed ^ 0x9e3779b97f4a7c15ULL;
  SplitData out;
  switch (spec.design) {
    case DesignId::Toy:
      out.train = gen_toy(spec.n, spec.d, spec.noise, spec.seed);
      out.test = gen_toy(spec.n_test, spec.d, spec.noise, test_seed, out.train.noise_var);
      break;
    case DesignId::Savitsky:
      out.train = gen_savitsky(spec.n, spec.d, spec.noise, spec.seed);
      out.test = gen_savitsky(spec.n_test, spec.d, spec.noise, test_seed);
      break;
    case DesignId::Interactive:
      out.train = gen_interactive(spec.n, spec.d, spec.noise, spec.rho, spec.seed, false);
      out.test = gen_interactive(spec.n_test, spec.d, spec.noise, spec.rho, test_seed, spec.grid_test,
                                 out.train.noise_var);
      break;
  }
  return out;
}

/// Per-column affine statistics used to map data to zero mean, unit
/// (population) standard deviation and back.
struct Standardization {
  double y_mean = 0.0;
  double y_sd = 1.0;
  VectorXd x_means;
  VectorXd x_sds;
  std::vector<Index> dropped_columns;
};

inline Standardization fit_standardization(const Dataset &data, bool drop_constant = false) {
  Standardization s;
  if (data.n() < 2) throw DataError("standardize: need at least two rows");
  s.y_mean = data.y.mean();
  s.y_sd = std::sqrt(detail::sample_var(data.y));
  if (!(s.y_sd > 0.0)) throw DataError("standardize: response has zero variance");
  std::vector<Index> keep;
  std::vector<double> means, sds;
  for (Index j = 0; j < data.d(); ++j) {
    const double m = data.X.col(j).mean();
    const double sd = std::sqrt(detail::sample_var(data.X.col(j)));
    if (!(sd > 0.0)) {
      if (!drop_constant)
        throw DataError("standardize: column '" +
                        (j < static_cast<Index>(data.feature_names.size()) ? data.feature_names[static_cast<std::size_t>(j)]
                                                                            : std::to_string(j + 1)) +
                        "' has zero variance");
      s.dropped_columns.push_back(j);
      continue;
    }
    keep.push_back(j);
    means.push_back(m);
    sds.push_back(sd);
  }
  s.x_means = Eigen::Map<VectorXd>(means.data(), static_cast<Index>(means.size()));
  s.x_sds = Eigen::Map<VectorXd>(sds.data(), static_cast<Index>(sds.size()));
  return s;
}

/// Applies previously fitted statistics (e.g. training statistics to a test set).
inline Dataset apply_standardization(const Dataset &data, const Standardization &s) {
  Dataset out = data;
  std::vector<Index> keep;
  for (Index j = 0, r = 0; j < data.d(); ++j) {
    if (r < static_cast<Index>(s.dropped_columns.size()) && s.dropped_columns[static_cast<std::size_t>(r)] == j) {
      ++r;
      continue;
    }
    keep.push_back(j);
  }
  if (static_cast<Index>(keep.size()) != s.x_means.size()) throw DataError("standardize: column count mismatch");
  out.X.resize(data.n(), static_cast<Index>(keep.size()));
  out.feature_names.clear();
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const auto cc = static_cast<Index>(c);
    out.X.col(cc) = (data.X.col(keep[c]).array() - s.x_means[cc]) / s.x_sds[cc];
    if (keep[c] < static_cast<Index>(data.feature_names.size()))
      out.feature_names.push_back(data.feature_names[static_cast<std::size_t>(keep[c])]);
  }
  if (out.relevant_set) {
    std::vector<Index> rel;
    for (auto j : *out.relevant_set) {
      auto it = std::find(keep.begin(), keep.end(), j);
      if (it != keep.end()) rel.push_back(static_cast<Index>(it - keep.begin()));
    }
    out.relevant_set = rel;
  }
  out.y = (data.y.array() - s.y_mean) / s.y_sd;
  if (out.f.size() == out.y.size()) out.f = (data.f.array() - s.y_mean) / s.y_sd;
  out.noise_var = data.noise_var / (s.y_sd * s.y_sd);
  out.y_mean = s.y_mean;
  out.y_sd = s.y_sd;
  out.x_means = s.x_means;
  out.x_sds = s.x_sds;
  out.dropped_columns = s.dropped_columns;
  return out;
}

/// Zero mean and unit population sd for y and every column of X.
/// Zero-variance columns raise DataError unless drop_constant is set.
inline Dataset standardize(const Dataset &data, bool drop_constant = false) {
  return apply_standardization(data, fit_standardization(data, drop_constant));
}

inline VectorXd unstandardize_mean(const VectorXd &m, double y_mean, double y_sd) {
  return (m.array() * y_sd + y_mean).matrix();
}

inline VectorXd unstandardize_var(const VectorXd &v, double y_sd) { return v * (y_sd * y_sd); }

inline double boxcox_transform(double y, double lambda) {
  return lambda == 0.0 ? std::log(y) : (std::pow(y, lambda) - 1.0) / lambda;
}

inline double boxcox_inverse(double z, double lambda) {
  return lambda == 0.0 ? std::exp(z) : std::pow(lambda * z + 1.0, 1.0 / lambda);
}

/// Box-Cox profile log likelihood: -n/2 log(var of transformed y) + (lambda - 1) sum log y.
inline double boxcox_profile_loglik(const VectorXd &y, double lambda) {
  VectorXd z = y.unaryExpr([lambda](double v) { return boxcox_transform(v, lambda); });
  const double n = static_cast<double>(y.size());
  return -0.5 * n * std::log(detail::sample_var(z)) + (lambda - 1.0) * y.array().log().sum();
}

inline std::vector<double> default_boxcox_grid() {
  std::vector<double> g;
  for (int k = -20; k <= 20; ++k) g.push_back(k / 10.0);
  return g;
}

struct BoxCoxResult {
  VectorXd y;
  double lambda = 1.0;
  double shift = 0.0;
};

/// Chooses lambda on the grid by profile likelihood and transforms y. Data
/// with a non-positive minimum are shifted by 1 - min(y) first.
inline BoxCoxResult boxcox(const VectorXd &y, const std::vector<double> &grid = default_boxcox_grid()) {
  if (y.size() < 2) throw DataError("boxcox: need at least two values");
  if (grid.empty()) throw ConfigError("boxcox: empty lambda grid");
  if (!y.allFinite()) throw DataError("boxcox: non-finite response values");
  BoxCoxResult r;
  const double mn = y.minCoeff();
  r.shift = mn <= 0.0 ? 1.0 - mn : 0.0;
  const VectorXd ys = y.array() + r.shift;
  if (!(ys.minCoeff() > 0.0)) throw DataError("boxcox: non-positive values after shift");
  double best = -std::numeric_limits<double>::infinity();
  for (double l : grid) {
    const double ll = boxcox_profile_loglik(ys, l);
    if (ll > best) best = ll, r.lambda = l;
  }
  r.y = ys.unaryExpr([&](double v) { return boxcox_transform(v, r.lambda); });
  return r;
}

/// CSV failure categories; each carries a message naming the location.
struct CsvError : DataError {
  enum class Kind { Io, Empty, Ragged, MissingValue, NonNumeric, MissingTarget };
  Kind kind;
  CsvError(Kind k, const std::string &what) : DataError(what), kind(k) {}
};

namespace detail {

inline std::vector<std::string> split_line(const std::string &line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;
};

/// Reads a rectangular numeric CSV with a header row. Rows and columns in
/// error messages are 1-based; row 1 is the header.
inline CsvTable read_csv_table(const std::string &path, char delimiter = ',') {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvError::Kind::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw CsvError(CsvError::Kind::Empty, "'" + path + "' is empty");
  CsvTable t;
  for (auto &h : detail::split_line(line, delimiter)) t.header.push_back(detail::trim(h));
  const auto cols = t.header.size();
  std::vector<double> vals;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_line(line, delimiter);
    if (cells.size() != cols)
      throw CsvError(CsvError::Kind::Ragged, path + ": row " + std::to_string(row) + " has " +
                                                 std::to_string(cells.size()) + " cells, expected " +
                                                 std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string cell = detail::trim(cells[c]);
      const std::string where = path + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                " ('" + t.header[c] + "')";
      if (cell.empty()) throw CsvError(CsvError::Kind::MissingValue, "missing value at " + where);
      double v = 0.0;
      const char *first = cell.data();
      if (*first == '+') ++first;
      const auto res = std::from_chars(first, cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw CsvError(CsvError::Kind::NonNumeric, "non-numeric value '" + cell + "' at " + where);
      vals.push_back(v);
    }
  }
  const auto rows = static_cast<Index>(vals.size() / std::max<std::size_t>(cols, 1));
  t.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      vals.data(), rows, static_cast<Index>(cols));
  return t;
}

/// Loads a CSV into a Dataset with `target_column` as y and every other
/// column as an input, preserving row order.
inline Dataset load_csv(const std::string &path, const std::string &target_column = "y", char delimiter = ',') {
  CsvTable t = read_csv_table(path, delimiter);
  const auto it = std::find(t.header.begin(), t.header.end(), target_column);
  if (it == t.header.end())
    throw CsvError(CsvError::Kind::MissingTarget, path + ": target column '" + target_column + "' not found");
  const auto target = static_cast<Index>(it - t.header.begin());
  Dataset ds;
  ds.target_name = target_column;
  ds.y = t.values.col(target);
  ds.X.resize(t.values.rows(), t.values.cols() - 1);
  for (Index j = 0, c = 0; j < t.values.cols(); ++j) {
    if (j == target) continue;
    ds.X.col(c++) = t.values.col(j);
    ds.feature_names.push_back(t.header[static_cast<std::size_t>(j)]);
  }
  ds.x_means = VectorXd::Zero(ds.d());
  ds.x_sds = VectorXd::Ones(ds.d());
  return ds;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes header + rows with 17 significant digits.
inline void write_csv(const std::string &path, const std::vector<std::string> &header, const MatrixXd &values,
                      char delimiter = ',') {
  std::ofstream out(path);
  if (!out) throw CsvError(CsvError::Kind::Io, "cannot write '" + path + "'");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? std::string(1, delimiter) : "") << header[c];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? std::string(1, delimiter) : "") << format_double(values(i, j));
    out << '\n';
  }
  if (!out) throw CsvError(CsvError::Kind::Io, "write to '" + path + "' failed");
}

/// Writes the dataset as y followed by its input columns.
inline void write_dataset_csv(const std::string &path, const Dataset &ds) {
  std::vector<std::string> header{ds.target_name};
  auto names = ds.feature_names.size() == static_cast<std::size_t>(ds.d()) ? ds.feature_names
                                                                            : detail::default_names(ds.d());
  header.insert(header.end(), names.begin(), names.end());
  MatrixXd m(ds.n(), ds.d() + 1);
  m << ds.y, ds.X;
  write_csv(path, header, m);
}

}  // namespace ssvgp
