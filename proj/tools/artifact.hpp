#pragma once

// JSON ensemble artifact: everything predict needs (standardization, the
// standardized training data, every model's variational state and the
// weights). Timings stay out so reruns produce identical files.

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssvgp/data.hpp"
#include "ssvgp/ensemble.hpp"
#include "ssvgp/errors.hpp"

namespace ssvgp::cli {

using json = nlohmann::json;

inline constexpr const char *kSchema = "ssvgp-1";

struct Artifact {
  Ensemble ensemble;
  Dataset train;  // standardized; carries y_mean, y_sd, x_means, x_sds
  std::vector<std::string> original_features;
  std::optional<Eigen::Index> m_star;
  PredictMode mode = PredictMode::Average;
  json config;
};

namespace detail {

inline json vec(const VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd to_vec(const json &j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json mat(const MatrixXd &m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

inline MatrixXd to_mat(const json &j, Eigen::Index cols) {
  MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const VectorXd r = to_vec(j[i]);
    if (r.size() != cols) throw DataError("artifact: ragged training matrix");
    m.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return m;
}

inline json flags(const std::vector<char> &f) {
  std::vector<int> out(f.begin(), f.end());
  return out;
}

inline std::vector<char> to_flags(const json &j) {
  const auto v = j.get<std::vector<int>>();
  return std::vector<char>(v.begin(), v.end());
}

}  // namespace detail

inline json to_json(const ModelResult &m) {
  using detail::vec;
  const auto &s = m.state;
  json j{{"v", m.hyper.v},        {"c", m.hyper.c},
         {"a", m.hyper.a},        {"b", m.hyper.b},
         {"mu", vec(s.mu)},       {"sigma_q", vec(s.sigma_q)},
         {"lambda", vec(s.lambda)}, {"xi_a", s.xi_a},
         {"xi_b", s.xi_b},        {"tau", s.tau},
         {"noise_var", s.noise_var}, {"pruned", detail::flags(s.pruned)},
         {"selected", detail::flags(m.selected)}, {"log_loopd", m.log_loopd}};
  j["sub_loopd"] = m.sub_loopd ? json(*m.sub_loopd) : json(nullptr);
  return j;
}

inline ModelResult model_from_json(const json &j, PosteriorKind kind) {
  ModelResult m;
  m.hyper = SpikeSlabHyper{j.at("v").get<double>(), j.at("c").get<double>(), j.at("a").get<double>(), j.at("b").get<double>()};
  const VectorXd mu = detail::to_vec(j.at("mu"));
  m.state = initial_state(mu.size(), kind);
  m.state.mu = mu;
  m.state.sigma_q = detail::to_vec(j.at("sigma_q"));
  m.state.lambda = detail::to_vec(j.at("lambda"));
  m.state.xi_a = j.at("xi_a").get<double>();
  m.state.xi_b = j.at("xi_b").get<double>();
  m.state.tau = j.at("tau").get<double>();
  m.state.noise_var = j.at("noise_var").get<double>();
  m.state.pruned = detail::to_flags(j.at("pruned"));
  m.selected = detail::to_flags(j.at("selected"));
  m.log_loopd = j.at("log_loopd").get<double>();
  if (!j.at("sub_loopd").is_null()) m.sub_loopd = j.at("sub_loopd").get<double>();
  const auto d = static_cast<std::size_t>(mu.size());
  if (m.state.sigma_q.size() != mu.size() || m.state.lambda.size() != mu.size() || m.state.pruned.size() != d ||
      m.selected.size() != d)
    throw DataError("artifact: model vectors disagree in length");
  return m;
}

inline json to_json(const Artifact &a) {
  using detail::vec;
  const Ensemble &e = a.ensemble;
  json models = json::array();
  for (const auto &m : e.models) models.push_back(to_json(m));
  json j;
  j["schema"] = kSchema;
  j["posterior"] = to_string(e.posterior);
  j["jitter"] = e.jitter;
  j["mfg_predict_samples"] = e.mfg_predict_samples;
  j["seed"] = e.seed;
  j["mode"] = to_string(a.mode);
  j["m_star"] = a.m_star ? json(*a.m_star) : json(nullptr);
  j["weights"] = vec(e.weights);
  j["prediction_weights"] = vec(e.prediction_weights);
  j["marginal_pips"] = vec(e.marginal_pips);
  j["models"] = models;
  j["warnings"] = e.warnings;
  j["standardization"] = {{"y_mean", a.train.y_mean},
                          {"y_sd", a.train.y_sd},
                          {"x_means", vec(a.train.x_means)},
                          {"x_sds", vec(a.train.x_sds)},
                          {"dropped_columns", a.train.dropped_columns}};
  j["target"] = a.train.target_name;
  j["original_features"] = a.original_features;
  j["features"] = a.train.feature_names;
  j["train"] = {{"y", vec(a.train.y)}, {"X", detail::mat(a.train.X)}};
  j["config"] = a.config;
  return j;
}

inline Artifact artifact_from_json(const json &j) {
  if (!j.is_object() || !j.contains("schema"))
    throw DataError("artifact: missing schema tag (not an ensemble artifact?)");
  const auto schema = j.at("schema").get<std::string>();
  if (schema != kSchema)
    throw DataError("artifact: schema '" + schema + "' is not supported (expected '" + kSchema + "')");
  try {
    Artifact a;
    Ensemble &e = a.ensemble;
    e.posterior = posterior_kind_from_string(j.at("posterior").get<std::string>());
    e.jitter = j.at("jitter").get<double>();
    e.mfg_predict_samples = j.at("mfg_predict_samples").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    a.mode = predict_mode_from_string(j.at("mode").get<std::string>());
    if (!j.at("m_star").is_null()) a.m_star = j.at("m_star").get<Eigen::Index>();
    e.weights = detail::to_vec(j.at("weights"));
    e.prediction_weights = detail::to_vec(j.at("prediction_weights"));
    e.marginal_pips = detail::to_vec(j.at("marginal_pips"));
    for (const auto &m : j.at("models")) e.models.push_back(model_from_json(m, e.posterior));
    e.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (e.models.empty() || static_cast<Eigen::Index>(e.models.size()) != e.weights.size() ||
        e.weights.size() != e.prediction_weights.size())
      throw DataError("artifact: model count and weights disagree");

    const json &st = j.at("standardization");
    Dataset &t = a.train;
    t.y_mean = st.at("y_mean").get<double>();
    t.y_sd = st.at("y_sd").get<double>();
    t.x_means = detail::to_vec(st.at("x_means"));
    t.x_sds = detail::to_vec(st.at("x_sds"));
    t.dropped_columns = st.at("dropped_columns").get<std::vector<Eigen::Index>>();
    t.target_name = j.at("target").get<std::string>();
    a.original_features = j.at("original_features").get<std::vector<std::string>>();
    t.feature_names = j.at("features").get<std::vector<std::string>>();
    t.y = detail::to_vec(j.at("train").at("y"));
    t.X = detail::to_mat(j.at("train").at("X"), t.x_means.size());
    if (t.X.rows() != t.y.size()) throw DataError("artifact: training rows disagree");
    if (e.models.front().state.dim() != t.X.cols()) throw DataError("artifact: model dimension disagrees with data");
    a.config = j.at("config");
    return a;
  } catch (const json::exception &ex) {
    throw DataError(std::string("artifact: malformed field (") + ex.what() + ")");
  }
}

inline void write_json(const std::string &path, const json &j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ssvgp::cli
