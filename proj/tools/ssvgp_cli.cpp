// ssvgp command-line tool: synth, train, predict, benchmark.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "artifact.hpp"
#include "run_config.hpp"
#include "ssvgp/benchmark.hpp"
#include "ssvgp/ssvgp.hpp"

namespace fs = std::filesystem;
using namespace ssvgp;
using namespace ssvgp::cli;

namespace {

std::string flag_name(const std::string &key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

// Registers one string option per config key; values are applied after the
// config file so flags win.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option *> options;
  std::string config_path;

  void add_to(CLI::App &cmd) {
    cmd.add_option("--config", config_path, "JSON config file (flags override its values)");
    for (const auto &[key, field] : fields()) options[key] = cmd.add_option(flag_name(key), values[key], field.help);
  }

  void apply(RunConfig &cfg) const {
    if (!config_path.empty()) {
      json j;
      try {
        j = read_json(config_path);
      } catch (const DataError &e) {
        throw ConfigError(e.what());
      }
      apply_json(cfg, j);
    }
    for (const auto &[key, opt] : options)
      if (opt->count() > 0) set_flag(cfg, key, values.at(key));
  }
};

void ensure_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string &dir, const std::string &file) { return (fs::path(dir) / file).string(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Eigen::Index> one_based(const std::vector<Eigen::Index> &v) {
  std::vector<Eigen::Index> out;
  for (auto j : v) out.push_back(j + 1);
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string design = "toy";
  Eigen::Index n = 300, d = 100, n_test = 100;
  std::optional<double> noise;
  double rho = 0.5;
  bool grid_test = false;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void write_latent(const std::string &path, const VectorXd &f) {
  MatrixXd m(f.size(), 2);
  for (Eigen::Index i = 0; i < f.size(); ++i) m.row(i) << static_cast<double>(i + 1), f[i];
  write_csv(path, {"row", "f"}, m);
}

int cmd_synth(const SynthArgs &a) {
  DesignSpec spec;
  spec.design = design_from_string(a.design);
  spec.n = a.n;
  spec.d = a.d;
  spec.n_test = a.n_test;
  spec.noise = a.noise.value_or(spec.design == DesignId::Interactive ? 1.0 / 3.0 : 0.05);
  spec.rho = a.rho;
  spec.grid_test = a.grid_test;
  spec.seed = a.seed;
  if (a.grid_test && spec.design != DesignId::Interactive) throw ConfigError("--grid-test applies to the interactive design only");
  const SplitData split = generate_split(spec);

  ensure_dir(a.out);
  write_dataset_csv(join(a.out, "train.csv"), split.train);
  write_dataset_csv(join(a.out, "test.csv"), split.test);
  write_latent(join(a.out, "test_latent.csv"), split.test.f);
  const auto rel = split.train.relevant_set.value_or(std::vector<Eigen::Index>{});
  std::vector<std::string> rel_names;
  for (auto j : rel) rel_names.push_back(split.train.feature_names[static_cast<std::size_t>(j)]);
  json side{{"schema", kSchema},
            {"design", to_string(spec.design)},
            {"n", spec.n},
            {"d", spec.d},
            {"n_test", spec.n_test},
            {"noise", spec.noise},
            {"noise_var", split.train.noise_var},
            {"rho", spec.rho},
            {"grid_test", spec.grid_test},
            {"seed", spec.seed},
            {"relevant", one_based(rel)},
            {"relevant_names", rel_names},
            {"files", {{"train", "train.csv"}, {"test", "test.csv"}, {"test_latent", "test_latent.csv"}}}};
  write_json(join(a.out, "design.json"), side);
  std::cout << "wrote " << join(a.out, "train.csv") << ", test.csv, test_latent.csv and design.json\n";
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const std::string &data_path, const std::string &out, const ConfigFlags &flags) {
  RunConfig cfg;
  cfg.fit.threads = 0;
  flags.apply(cfg);
  const int threads = resolve_threads(cfg.fit.threads);

  const Dataset raw = load_csv(data_path, cfg.target);
  const Dataset train = standardize(raw, cfg.drop_constant);
  cfg.validate(train.n());
  FitSettings fs = cfg.fit_settings();
  fs.threads = threads;

  const auto t0 = std::chrono::steady_clock::now();
  const Ensemble ens = fit(train.y, train.X, cfg.train, fs);
  const double total = seconds_since(t0);

  Artifact art;
  art.ensemble = ens;
  art.train = train;
  art.original_features = raw.feature_names;
  art.m_star = cfg.m_star;
  art.mode = cfg.fit.mode;
  art.config = to_json(cfg);
  ensure_dir(out);
  write_json(join(out, "ensemble.json"), to_json(art));

  // Per-variable report: marginal PIP, then lambda and mu of each model.
  {
    std::ofstream pips(join(out, "pips.csv"));
    if (!pips) throw DataError("cannot write '" + join(out, "pips.csv") + "'");
    pips << "index,name,marginal_pip";
    for (const auto &m : ens.models) pips << ",lambda_v" << format_double(m.hyper.v);
    for (const auto &m : ens.models) pips << ",mu_v" << format_double(m.hyper.v);
    pips << '\n';
    for (Eigen::Index j = 0; j < train.d(); ++j) {
      pips << j + 1 << ',' << train.feature_names[static_cast<std::size_t>(j)] << ',' << format_double(ens.marginal_pips[j]);
      for (const auto &m : ens.models) pips << ',' << format_double(m.state.lambda[j]);
      for (const auto &m : ens.models) pips << ',' << format_double(m.state.mu[j]);
      pips << '\n';
    }
  }

  std::vector<Eigen::Index> selected;
  std::vector<std::string> selected_names;
  for (Eigen::Index j = 0; j < train.d(); ++j)
    if (ens.marginal_pips[j] > 0.5) {
      selected.push_back(j + 1);
      selected_names.push_back(train.feature_names[static_cast<std::size_t>(j)]);
    }
  json per_model = json::array();
  for (std::size_t k = 0; k < ens.models.size(); ++k) {
    const auto &m = ens.models[k];
    per_model.push_back({{"v", m.hyper.v},
                         {"weight", ens.weights[static_cast<Eigen::Index>(k)]},
                         {"log_loopd", m.log_loopd},
                         {"active_dims", m.state.active_count()},
                         {"train_seconds", m.train_seconds},
                         {"loopd_seconds", m.loopd_seconds}});
  }
  json meta{{"schema", kSchema},
            {"command", "train"},
            {"data", data_path},
            {"n", train.n()},
            {"d", train.d()},
            {"dropped_columns", one_based(train.dropped_columns)},
            {"threads", threads},
            {"effective_config", to_json(cfg)},
            {"timings", {{"train_seconds", ens.train_seconds}, {"loopd_seconds", ens.loopd_seconds}, {"total_seconds", total}}},
            {"models", per_model},
            {"selected", selected},
            {"selected_names", selected_names},
            {"warnings", ens.warnings}};
  write_json(join(out, "run_metadata.json"), meta);

  std::cout << "trained " << ens.models.size() << " models in " << total << " s; selected:";
  for (const auto &s : selected_names) std::cout << ' ' << s;
  std::cout << "\nwrote " << join(out, "ensemble.json") << ", pips.csv and run_metadata.json\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model, data, out = "predictions.csv", mode;
  std::optional<Eigen::Index> m_star;
  int threads = 0;
};

int cmd_predict(const PredictArgs &a) {
  const Artifact art = artifact_from_json(read_json(a.model));
  const Dataset &train = art.train;
  const CsvTable table = read_csv_table(a.data);

  // Inputs are matched to the training features by column name.
  MatrixXd X(table.values.rows(), train.d());
  for (Eigen::Index j = 0; j < train.d(); ++j) {
    const auto &name = train.feature_names[static_cast<std::size_t>(j)];
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw DataError(a.data + ": training feature '" + name + "' is missing");
    X.col(j) = table.values.col(it - table.header.begin());
  }
  for (Eigen::Index j = 0; j < train.d(); ++j) X.col(j) = (X.col(j).array() - train.x_means[j]) / train.x_sds[j];

  const PredictMode mode = a.mode.empty() ? art.mode : predict_mode_from_string(a.mode);
  const auto m_star = a.m_star ? (*a.m_star == 0 ? std::nullopt : a.m_star) : art.m_star;
  const Prediction p = bma_predict(art.ensemble, X, train.y, train.X, mode, m_star, resolve_threads(a.threads));
  const VectorXd mean = unstandardize_mean(p.mean, train.y_mean, train.y_sd);
  const VectorXd var = unstandardize_var(p.var, train.y_sd);

  MatrixXd rows(mean.size(), 3);
  for (Eigen::Index i = 0; i < mean.size(); ++i) rows.row(i) << static_cast<double>(i + 1), mean[i], var[i];
  const auto parent = fs::path(a.out).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  write_csv(a.out, {"row", "mean", "variance"}, rows);
  std::cout << "wrote " << mean.size() << " predictions to " << a.out << '\n';

  const auto t = std::find(table.header.begin(), table.header.end(), train.target_name);
  if (t != table.header.end() && mean.size() >= 2) {
    const VectorXd y = table.values.col(t - table.header.begin());
    if ((y.array() - y.mean()).square().sum() > 0.0)
      std::cout << "normalized MSE against '" << train.target_name << "': " << normalized_mse(y, mean) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- benchmark

json trial_json(const TrialResult &t) {
  json j{{"seed", t.seed},
         {"mse", t.mse},
         {"mcc", t.mcc},
         {"runtime_seconds", t.runtime},
         {"train_seconds", t.train_seconds},
         {"loopd_seconds", t.loopd_seconds},
         {"predict_seconds", t.predict_seconds},
         {"models", t.models}};
  if (t.mlii_mse) {
    j["mlii_mse"] = *t.mlii_mse;
    j["mlii_mcc"] = *t.mlii_mcc;
    j["mlii_runtime_seconds"] = *t.mlii_runtime;
  }
  return j;
}

json summary(const std::vector<double> &v) {
  return {{"mean", mean(v)}, {"sd", stddev(v)}, {"median", median(v)}};
}

void write_profile(const std::string &path, const VectorXd &p) {
  MatrixXd m(p.size(), 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) m.row(i) << static_cast<double>(i + 1), p[i];
  write_csv(path, {"position", "value"}, m);
}

int cmd_benchmark(const std::string &recipe_name, const std::string &out, const ConfigFlags &flags) {
  Recipe recipe = make_recipe(recipe_name);
  RunConfig cfg;
  cfg.train = recipe.train;
  cfg.fit = recipe.fit;
  cfg.fit.threads = 0;
  cfg.m_star = recipe.predict_m_star;
  flags.apply(cfg);
  cfg.validate(recipe.design.n);
  recipe.train = cfg.train;
  recipe.fit = cfg.fit_settings();
  recipe.predict_m_star = cfg.m_star;
  // The seed key is the base seed; each trial derives its own from it.
  const std::uint64_t seed = cfg.train.seed;
  const int threads = resolve_threads(cfg.fit.threads);

  BenchmarkSummary s;
  s.recipe = recipe.name;
  for (int t = 0; t < cfg.trials; ++t) {
    s.trials.push_back(run_trial(recipe, trial_seed(seed, t), threads));
    const auto &r = s.trials.back();
    std::cout << "trial " << t + 1 << "/" << cfg.trials << ": mse " << r.mse << ", mcc " << r.mcc << ", "
              << r.runtime << " s";
    if (r.mlii_mse) std::cout << " (ml-ii mse " << *r.mlii_mse << ", " << *r.mlii_runtime << " s)";
    std::cout << '\n';
  }
  std::vector<VectorXd> pips, ls;
  std::vector<double> mse, mcc_v, rt, mlii_mse, mlii_mcc, mlii_rt;
  json trials = json::array();
  for (const auto &t : s.trials) {
    pips.push_back(t.marginal_pips);
    ls.push_back(t.lengthscale_profile);
    mse.push_back(t.mse);
    mcc_v.push_back(t.mcc);
    rt.push_back(t.runtime);
    if (t.mlii_mse) {
      mlii_mse.push_back(*t.mlii_mse);
      mlii_mcc.push_back(*t.mlii_mcc);
      mlii_rt.push_back(*t.mlii_runtime);
    }
    trials.push_back(trial_json(t));
  }
  s.pip_profile = pip_profile(pips, s.trials.front().relevant);
  s.lengthscale_profile = pip_profile(ls, s.trials.front().relevant);

  json agg{{"mse", summary(mse)}, {"mcc", summary(mcc_v)}, {"runtime_seconds", summary(rt)}};
  if (!mlii_mse.empty())
    agg["mlii"] = {{"mse", summary(mlii_mse)}, {"mcc", summary(mlii_mcc)}, {"runtime_seconds", summary(mlii_rt)}};
  json metrics{{"schema", kSchema},
               {"recipe", recipe.name},
               {"seed", seed},
               {"threads", threads},
               {"mse_target", recipe.mse_against_latent ? "latent" : "noisy"},
               {"design",
                {{"design", to_string(recipe.design.design)},
                 {"n", recipe.design.n},
                 {"d", recipe.design.d},
                 {"n_test", recipe.design.n_test},
                 {"noise", recipe.design.noise},
                 {"rho", recipe.design.rho},
                 {"grid_test", recipe.design.grid_test}}},
               {"effective_config", to_json(cfg)},
               {"trials", trials},
               {"aggregate", agg}};
  ensure_dir(out);
  write_json(join(out, "metrics.json"), metrics);
  write_profile(join(out, "pip_profile.csv"), s.pip_profile);
  write_profile(join(out, "lengthscale_profile.csv"), s.lengthscale_profile);
  std::cout << recipe.name << ": mse " << mean(mse) << " +/- " << stddev(mse) << " (median " << median(mse) << "), mcc "
            << mean(mcc_v) << " +/- " << stddev(mcc_v) << ", runtime " << mean(rt) << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Spike-and-slab variational GP variable selection"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto *s = app.add_subcommand("synth", "generate a synthetic design as train/test CSVs");
  s->add_option("--design", synth.design, "toy, savitsky or interactive")->capture_default_str();
  s->add_option("--n", synth.n, "training rows")->capture_default_str();
  s->add_option("--d", synth.d, "input dimensions")->capture_default_str();
  s->add_option("--n-test", synth.n_test, "test rows")->capture_default_str();
  s->add_option("--noise", synth.noise, "noise-to-signal ratio (toy, interactive) or noise sd (savitsky)");
  s->add_option("--rho", synth.rho, "copula correlation (interactive)")->capture_default_str();
  s->add_flag("--grid-test", synth.grid_test, "place test (x1, x2) on a regular grid (interactive)");
  s->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->capture_default_str();

  std::string train_data, train_out = ".";
  ConfigFlags train_flags;
  auto *t = app.add_subcommand("train", "fit the ensemble on a CSV");
  t->add_option("--data", train_data, "training CSV with a header row")->required();
  t->add_option("--out", train_out, "output directory")->capture_default_str();
  train_flags.add_to(*t);

  PredictArgs pred;
  auto *p = app.add_subcommand("predict", "predict test rows from an ensemble artifact");
  p->add_option("--model", pred.model, "ensemble.json written by train")->required();
  p->add_option("--data", pred.data, "CSV with the training feature columns")->required();
  p->add_option("--out", pred.out, "predictions CSV")->capture_default_str();
  p->add_option("--mode", pred.mode, "average or best (default: as trained)");
  p->add_option("--m-star", pred.m_star, "nearest training points per test point (0: all)");
  p->add_option("--threads", pred.threads, "worker threads (0: SSVGP_THREADS or all cores)");

  std::string recipe = "toy", bench_out = ".";
  ConfigFlags bench_flags;
  auto *b = app.add_subcommand("benchmark", "run seeded trials of a named recipe");
  b->add_option("--recipe", recipe, "toy, experiment1 or experiment2-scaled")->capture_default_str();
  b->add_option("--out", bench_out, "output directory")->capture_default_str();
  bench_flags.add_to(*b);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train_data, train_out, train_flags);
    if (*p) return cmd_predict(pred);
    if (*b) return cmd_benchmark(recipe, bench_out, bench_flags);
  } catch (const ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
