#pragma once

// Run configuration for the command-line tool: one flat table of keys shared
// by the JSON config file and the command-line flags, so both go through the
// same parsing and validation.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssvgp/ensemble.hpp"
#include "ssvgp/errors.hpp"
#include "ssvgp/variational.hpp"

namespace ssvgp::cli {

using json = nlohmann::json;

struct RunConfig {
  TrainConfig train;
  SpikeSlabHyper hyper;  // v is ignored; the grid supplies it
  double v_center = 1e4;
  double v_span = 1000.0;
  int grid_count = 11;
  FitSettings fit;  // grid is rebuilt from the three fields above
  std::optional<Eigen::Index> m_star;
  std::string target = "y";
  bool drop_constant = false;
  int trials = 10;

  std::vector<double> grid() const { return v_grid(v_center, v_span, grid_count); }

  FitSettings fit_settings() const {
    FitSettings f = fit;
    f.grid = grid();
    f.base_hyper = hyper;
    return f;
  }

  void validate(Eigen::Index n) const {
    train.validate(n);
    SpikeSlabHyper h = hyper;
    h.v = v_center;
    h.validate();
    (void)grid();
    if (fit.threshold_S < 0) throw ConfigError("threshold_S must be >= 0");
    if (fit.m_tilde < 1) throw ConfigError("m_tilde must be >= 1");
    if (fit.subset_n < 2) throw ConfigError("subset_n must be >= 2");
    if (fit.kappa < 0.0) throw ConfigError("kappa must be nonnegative");
    if (fit.mfg_predict_samples < 1) throw ConfigError("mfg_predict_samples must be >= 1");
    if (m_star && *m_star < 1) throw ConfigError("m_star must be >= 1");
    if (trials < 1) throw ConfigError("trials must be >= 1");
  }
};

namespace detail {

struct TypeMismatch {};

template <class T>
T as(const json &j) {
  if constexpr (std::is_same_v<T, bool>) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
    }
    if (j.is_number_integer() && (j.get<long long>() == 0 || j.get<long long>() == 1)) return j.get<long long>() == 1;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (j.is_string()) return j.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (j.is_number_unsigned()) return static_cast<T>(j.get<std::uint64_t>());
    if (j.is_number_integer()) {
      if (std::is_unsigned_v<T> && j.get<long long>() < 0) throw TypeMismatch{};
      return static_cast<T>(j.get<long long>());
    }
    if (j.is_number_float() && j.get<double>() == std::floor(j.get<double>())) return static_cast<T>(j.get<double>());
  } else {
    if (j.is_number()) return j.get<T>();
  }
  throw TypeMismatch{};
}

struct Field {
  std::string help;
  std::function<void(RunConfig &, const json &)> set;
  std::function<json(const RunConfig &)> get;
};

template <class T, class Ref>
Field plain(std::string help, Ref ref) {
  return Field{std::move(help),
               [ref](RunConfig &c, const json &j) { ref(c) = as<T>(j); },
               [ref](const RunConfig &c) { return json(ref(const_cast<RunConfig &>(c))); }};
}

}  // namespace detail

/// Every recognised key. Flags use the same names with '-' for '_'.
inline const std::map<std::string, detail::Field> &fields() {
  using detail::as;
  using detail::Field;
  using detail::plain;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["K_iters"] = plain<int>("outer a-CAVI iterations", [](RunConfig &c) -> int & { return c.train.K_iters; });
    t["T_first"] = plain<int>("gradient steps in the first outer iteration", [](RunConfig &c) -> int & { return c.train.T_first; });
    t["T_rest"] = plain<int>("gradient steps in later outer iterations", [](RunConfig &c) -> int & { return c.train.T_rest; });
    t["lr"] = plain<double>("ADAM learning rate", [](RunConfig &c) -> double & { return c.train.lr; });
    t["beta1"] = plain<double>("ADAM beta1", [](RunConfig &c) -> double & { return c.train.beta1; });
    t["beta2"] = plain<double>("ADAM beta2", [](RunConfig &c) -> double & { return c.train.beta2; });
    t["S_mc"] = plain<int>("Monte Carlo samples per step (mfg)", [](RunConfig &c) -> int & { return c.train.S_mc; });
    t["prune_eps"] = plain<double>("pruning threshold on PIPs", [](RunConfig &c) -> double & { return c.train.prune_eps; });
    t["pruning"] = plain<bool>("enable dropout pruning", [](RunConfig &c) -> bool & { return c.train.pruning; });
    t["nn_pool"] = plain<Eigen::Index>("candidate pool cap for minibatch neighbours",
                                       [](RunConfig &c) -> Eigen::Index & { return c.train.nn_pool; });
    t["seed"] = Field{"random seed",
                      [](RunConfig &c, const json &j) { c.train.seed = as<std::uint64_t>(j); },
                      [](const RunConfig &c) { return json(c.train.seed); }};
    t["jitter"] = plain<double>("diagonal jitter", [](RunConfig &c) -> double & { return c.train.jitter; });
    t["minibatch_m"] = Field{"minibatch size m (0 or null for full batch)",
                             [](RunConfig &c, const json &j) {
                               if (j.is_null()) return c.train.minibatch_m.reset();
                               const auto m = as<Eigen::Index>(j);
                               if (m == 0) c.train.minibatch_m.reset();
                               else c.train.minibatch_m = m;
                             },
                             [](const RunConfig &c) { return c.train.minibatch_m ? json(*c.train.minibatch_m) : json(nullptr); }};
    t["posterior"] = Field{"variational family: zt or mfg",
                           [](RunConfig &c, const json &j) { c.train.posterior = posterior_kind_from_string(as<std::string>(j)); },
                           [](const RunConfig &c) { return json(to_string(c.train.posterior)); }};
    t["c"] = plain<double>("slab/spike precision ratio", [](RunConfig &c) -> double & { return c.hyper.c; });
    t["a"] = plain<double>("Beta prior a", [](RunConfig &c) -> double & { return c.hyper.a; });
    t["b"] = plain<double>("Beta prior b", [](RunConfig &c) -> double & { return c.hyper.b; });
    t["v"] = plain<double>("spike precision grid centre", [](RunConfig &c) -> double & { return c.v_center; });
    t["v_span"] = plain<double>("grid spans v/span to v*span", [](RunConfig &c) -> double & { return c.v_span; });
    t["grid_count"] = plain<int>("number of grid values", [](RunConfig &c) -> int & { return c.grid_count; });
    t["mode"] = Field{"prediction: average or best",
                      [](RunConfig &c, const json &j) { c.fit.mode = predict_mode_from_string(as<std::string>(j)); },
                      [](const RunConfig &c) { return json(to_string(c.fit.mode)); }};
    t["threshold_S"] = plain<int>("weight thresholding draws (0 disables)", [](RunConfig &c) -> int & { return c.fit.threshold_S; });
    t["loopd_mode"] = Field{"LOOPD: auto, exact or truncated",
                            [](RunConfig &c, const json &j) { c.fit.loopd_mode = loopd_mode_from_string(as<std::string>(j)); },
                            [](const RunConfig &c) { return json(to_string(c.fit.loopd_mode)); }};
    t["loopd_exact_cutoff"] = plain<Eigen::Index>("largest n scored by exact LOOPD under auto",
                                                  [](RunConfig &c) -> Eigen::Index & { return c.fit.loopd_exact_cutoff; });
    t["m_tilde"] = plain<Eigen::Index>("neighbours per truncated LOOPD term", [](RunConfig &c) -> Eigen::Index & { return c.fit.m_tilde; });
    t["m_star"] = Field{"neighbours per test point at prediction (0 or null: all)",
                        [](RunConfig &c, const json &j) {
                          if (j.is_null()) return c.m_star.reset();
                          const auto m = as<Eigen::Index>(j);
                          if (m == 0) c.m_star.reset();
                          else c.m_star = m;
                        },
                        [](const RunConfig &c) { return c.m_star ? json(*c.m_star) : json(nullptr); }};
    t["compress"] = plain<bool>("keep one model per selected set", [](RunConfig &c) -> bool & { return c.fit.compress; });
    t["subset_n"] = plain<Eigen::Index>("subset size for compression scoring", [](RunConfig &c) -> Eigen::Index & { return c.fit.subset_n; });
    t["kappa"] = plain<double>("LOOPD variance inflation", [](RunConfig &c) -> double & { return c.fit.kappa; });
    t["mfg_predict_samples"] = plain<int>("posterior draws per mfg prediction",
                                          [](RunConfig &c) -> int & { return c.fit.mfg_predict_samples; });
    t["threads"] = plain<int>("worker threads (0: SSVGP_THREADS or all cores)", [](RunConfig &c) -> int & { return c.fit.threads; });
    t["target"] = plain<std::string>("response column name", [](RunConfig &c) -> std::string & { return c.target; });
    t["drop_constant"] = plain<bool>("drop zero-variance input columns", [](RunConfig &c) -> bool & { return c.drop_constant; });
    t["trials"] = plain<int>("benchmark trials", [](RunConfig &c) -> int & { return c.trials; });
    return t;
  }();
  return table;
}

inline void set_key(RunConfig &c, const std::string &key, const json &value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(c, value);
  } catch (const detail::TypeMismatch &) {
    throw ConfigError("config key '" + key + "' has the wrong type (got " + value.dump() + ")");
  }
}

inline void apply_json(RunConfig &c, const json &j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto &[key, value] : j.items()) set_key(c, key, value);
}

inline json to_json(const RunConfig &c) {
  json j = json::object();
  for (const auto &[key, field] : fields()) j[key] = field.get(c);
  return j;
}

/// Converts a flag's text to the JSON value the field expects: numbers and
/// booleans are parsed, anything else stays a string.
inline json flag_value(const std::string &text) {
  if (text == "null") return nullptr;
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(text, &pos);
    if (pos == text.size()) return json(i);
  } catch (...) {
  }
  try {
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(text, &pos);
    if (pos == text.size() && text.front() != '-') return json(u);
  } catch (...) {
  }
  try {
    std::size_t pos = 0;
    const double d = std::stod(text, &pos);
    if (pos == text.size()) return json(d);
  } catch (...) {
  }
  return json(text);
}

/// Applies a command-line flag. Text that parses as a number is tried as a
/// number first and as a plain string if the field wants one.
inline void set_flag(RunConfig &c, const std::string &key, const std::string &text) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown option '" + key + "'");
  try {
    it->second.set(c, flag_value(text));
  } catch (const detail::TypeMismatch &) {
    try {
      it->second.set(c, json(text));
    } catch (const detail::TypeMismatch &) {
      throw ConfigError("--" + key + ": cannot use '" + text + "'");
    }
  }
}

}  // namespace ssvgp::cli
