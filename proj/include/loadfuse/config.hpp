#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadfuse/csv.hpp"
#include "loadfuse/experiment.hpp"
#include "loadfuse/synthetic.hpp"

namespace loadfuse {

// JSON run configuration shared by every subcommand. Unknown keys are
// rejected outright; command-line flags override file values and the
// effective config is re-serialized into each output directory.

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       const std::set<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object())
    throw ConfigError("section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + section);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

}  // namespace detail

struct CsvSourceConfig {
  std::string path;
  CsvSchemaConfig schema;
};

struct RunConfig {
  std::optional<CsvSourceConfig> csv;
  std::optional<SyntheticSpec> synthetic;
  std::vector<std::string> targets;
  std::vector<Method> methods = {Method::Average, Method::PB, Method::CF,
                                 Method::CFDGP};
  SplitConfig split;
  TrainConfig train;
  EstimatorConfig estimator;
  CorrelationConfig correlation;
  bool recompute_correlation = false;
  double mape_epsilon = 1e-3;
  std::uint64_t seed = 0;
  int threads = 1;
  TimeScale train_scale = TimeScale::Fast;
  std::string report_table;
  std::string report_reference = "CF-DGP";

  ExperimentConfig experiment_for(const std::string& target) const {
    ExperimentConfig e;
    e.target = target;
    e.methods = methods;
    e.split = split;
    e.train = train;
    e.train.seed = seed ^ fnv1a(target.data(), target.size());
    e.estimator = estimator;
    e.correlation = correlation;
    e.mape_epsilon = mape_epsilon;
    e.threads = threads;
    e.recompute_correlation_online = recompute_correlation;
    return e;
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::check_keys(
      j,
      {"dataset", "synthetic", "targets", "methods", "split", "train",
       "estimator", "correlation", "mape_epsilon", "seed", "threads",
       "train_scale", "report"},
      "config");
  RunConfig cfg;

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(
        d, {"csv", "T", "delta_t_hours", "strict", "allow_negative_energy"},
        "dataset");
    CsvSourceConfig src;
    src.path = d.at("csv").get<std::string>();
    src.schema.T = detail::get_or(d, "T", 12);
    src.schema.delta_t_hours = detail::get_or(d, "delta_t_hours", 1.0 / 12.0);
    src.schema.strict = detail::get_or(d, "strict", true);
    src.schema.allow_negative_energy =
        detail::get_or(d, "allow_negative_energy", false);
    cfg.csv = src;
  }

  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    detail::check_keys(
        s,
        {"nodes", "days", "T", "delta_t_hours", "start", "daily_amplitude_kw",
         "daily_profile", "daily_weight_min", "daily_weight_max", "factors",
         "weights", "factor_amplitude_kw", "noise_scale_kw",
         "gross_error_rate", "gross_error_sigma", "rtu_nodes"},
        "synthetic");
    SyntheticSpec spec;
    spec.n_nodes = detail::get_or(s, "nodes", spec.n_nodes);
    spec.n_days = detail::get_or(s, "days", spec.n_days);
    spec.T = detail::get_or(s, "T", spec.T);
    spec.delta_t_hours = detail::get_or(s, "delta_t_hours", spec.delta_t_hours);
    spec.start_iso = detail::get_or<std::string>(s, "start", spec.start_iso);
    spec.daily_amplitude_kw =
        detail::get_or(s, "daily_amplitude_kw", spec.daily_amplitude_kw);
    spec.daily_profile = detail::get_or<std::vector<double>>(
        s, "daily_profile", spec.daily_profile);
    spec.daily_weight_min =
        detail::get_or(s, "daily_weight_min", spec.daily_weight_min);
    spec.daily_weight_max =
        detail::get_or(s, "daily_weight_max", spec.daily_weight_max);
    spec.n_factors = detail::get_or(s, "factors", spec.n_factors);
    spec.weights = detail::get_or<std::vector<std::vector<double>>>(
        s, "weights", spec.weights);
    spec.factor_amplitude_kw =
        detail::get_or(s, "factor_amplitude_kw", spec.factor_amplitude_kw);
    spec.noise_scale_kw = detail::get_or(s, "noise_scale_kw", spec.noise_scale_kw);
    spec.gross_error_rate =
        detail::get_or(s, "gross_error_rate", spec.gross_error_rate);
    spec.gross_error_sigma =
        detail::get_or(s, "gross_error_sigma", spec.gross_error_sigma);
    spec.rtu_nodes = detail::get_or<std::vector<std::string>>(s, "rtu_nodes",
                                                              spec.rtu_nodes);
    cfg.synthetic = spec;
  }

  cfg.targets =
      detail::get_or<std::vector<std::string>>(j, "targets", cfg.targets);

  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods"))
      cfg.methods.push_back(method_from_name(m.get<std::string>()));
    if (cfg.methods.empty()) throw ConfigError("methods list is empty");
  }

  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::check_keys(
        s, {"train_frac", "val_frac", "train_windows", "val_windows"},
        "split");
    cfg.split.train_frac = detail::get_or(s, "train_frac", cfg.split.train_frac);
    cfg.split.val_frac = detail::get_or(s, "val_frac", cfg.split.val_frac);
    cfg.split.train_windows =
        detail::get_or<std::int64_t>(s, "train_windows", cfg.split.train_windows);
    cfg.split.val_windows =
        detail::get_or<std::int64_t>(s, "val_windows", cfg.split.val_windows);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t,
                       {"layers", "inducing", "iterations", "learning_rate",
                        "minibatch", "mc_samples", "train_inducing",
                        "init_variance", "init_lengthscale",
                        "init_time_lengthscale", "init_noise",
                        "init_inner_from_targets",
                        "predict_samples", "convergence_window",
                        "convergence_tol", "divergence_factor"},
                       "train");
    auto& c = cfg.train;
    c.layers = detail::get_or(t, "layers", c.layers);
    c.inducing = detail::get_or(t, "inducing", c.inducing);
    c.iterations = detail::get_or(t, "iterations", c.iterations);
    c.learning_rate = detail::get_or(t, "learning_rate", c.learning_rate);
    c.minibatch = detail::get_or(t, "minibatch", c.minibatch);
    c.mc_samples = detail::get_or(t, "mc_samples", c.mc_samples);
    c.train_inducing = detail::get_or(t, "train_inducing", c.train_inducing);
    c.init_variance = detail::get_or(t, "init_variance", c.init_variance);
    c.init_lengthscale =
        detail::get_or(t, "init_lengthscale", c.init_lengthscale);
    c.init_time_lengthscale =
        detail::get_or(t, "init_time_lengthscale", c.init_time_lengthscale);
    c.init_noise = detail::get_or(t, "init_noise", c.init_noise);
    c.init_inner_from_targets = detail::get_or(t, "init_inner_from_targets",
                                               c.init_inner_from_targets);
    c.predict_samples = detail::get_or(t, "predict_samples", c.predict_samples);
    c.convergence_window =
        detail::get_or(t, "convergence_window", c.convergence_window);
    c.convergence_tol = detail::get_or(t, "convergence_tol", c.convergence_tol);
    c.divergence_factor =
        detail::get_or(t, "divergence_factor", c.divergence_factor);
    c.validate();
  }

  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    detail::check_keys(e, {"r_min", "trend_ref", "recompute_correlation"},
                       "estimator");
    cfg.estimator.r_min = detail::get_or(e, "r_min", cfg.estimator.r_min);
    const std::string ref =
        detail::get_or<std::string>(e, "trend_ref", "window_end");
    if (ref == "window_end")
      cfg.estimator.trend_ref = EstimatorConfig::TrendRef::WindowEnd;
    else if (ref == "window_mean")
      cfg.estimator.trend_ref = EstimatorConfig::TrendRef::WindowMean;
    else
      throw ConfigError("trend_ref must be window_end or window_mean");
    cfg.recompute_correlation =
        detail::get_or(e, "recompute_correlation", cfg.recompute_correlation);
  }

  if (j.contains("correlation")) {
    const auto& c = j.at("correlation");
    detail::check_keys(c, {"min_support", "end_window"}, "correlation");
    cfg.correlation.min_support =
        detail::get_or(c, "min_support", cfg.correlation.min_support);
    cfg.correlation.end_window = detail::get_or<std::int64_t>(
        c, "end_window", cfg.correlation.end_window);
  }

  cfg.mape_epsilon = detail::get_or(j, "mape_epsilon", cfg.mape_epsilon);
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.threads = detail::get_or(j, "threads", cfg.threads);
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");

  const std::string scale =
      detail::get_or<std::string>(j, "train_scale", "fast");
  if (scale == "fast")
    cfg.train_scale = TimeScale::Fast;
  else if (scale == "slow")
    cfg.train_scale = TimeScale::Slow;
  else
    throw ConfigError("train_scale must be fast or slow");

  if (j.contains("report")) {
    const auto& r = j.at("report");
    detail::check_keys(r, {"table", "reference"}, "report");
    cfg.report_table = detail::get_or<std::string>(r, "table", "");
    cfg.report_reference =
        detail::get_or<std::string>(r, "reference", cfg.report_reference);
  }

  if (cfg.csv && cfg.synthetic)
    throw ConfigError("config gives both a csv dataset and a synthetic spec");
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  if (cfg.csv) {
    j["dataset"] = {{"csv", cfg.csv->path},
                    {"T", cfg.csv->schema.T},
                    {"delta_t_hours", cfg.csv->schema.delta_t_hours},
                    {"strict", cfg.csv->schema.strict},
                    {"allow_negative_energy",
                     cfg.csv->schema.allow_negative_energy}};
  }
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    j["synthetic"] = {{"nodes", s.n_nodes},
                      {"days", s.n_days},
                      {"T", s.T},
                      {"delta_t_hours", s.delta_t_hours},
                      {"start", s.start_iso},
                      {"daily_amplitude_kw", s.daily_amplitude_kw},
                      {"factors", s.n_factors},
                      {"factor_amplitude_kw", s.factor_amplitude_kw},
                      {"noise_scale_kw", s.noise_scale_kw},
                      {"gross_error_rate", s.gross_error_rate},
                      {"gross_error_sigma", s.gross_error_sigma},
                      {"daily_weight_min", s.daily_weight_min},
                      {"daily_weight_max", s.daily_weight_max}};
    if (!s.weights.empty()) j["synthetic"]["weights"] = s.weights;
    if (!s.rtu_nodes.empty()) j["synthetic"]["rtu_nodes"] = s.rtu_nodes;
    if (!s.daily_profile.empty())
      j["synthetic"]["daily_profile"] = s.daily_profile;
  }
  j["targets"] = cfg.targets;
  j["methods"] = nlohmann::json::array();
  for (Method m : cfg.methods) j["methods"].push_back(method_name(m));
  j["split"] = {{"train_frac", cfg.split.train_frac},
                {"val_frac", cfg.split.val_frac},
                {"train_windows", cfg.split.train_windows},
                {"val_windows", cfg.split.val_windows}};
  j["train"] = {{"layers", cfg.train.layers},
                {"inducing", cfg.train.inducing},
                {"iterations", cfg.train.iterations},
                {"learning_rate", cfg.train.learning_rate},
                {"minibatch", cfg.train.minibatch},
                {"mc_samples", cfg.train.mc_samples},
                {"train_inducing", cfg.train.train_inducing},
                {"init_variance", cfg.train.init_variance},
                {"init_lengthscale", cfg.train.init_lengthscale},
                {"init_time_lengthscale", cfg.train.init_time_lengthscale},
                {"init_noise", cfg.train.init_noise},
                {"init_inner_from_targets", cfg.train.init_inner_from_targets},
                {"predict_samples", cfg.train.predict_samples},
                {"convergence_window", cfg.train.convergence_window},
                {"convergence_tol", cfg.train.convergence_tol},
                {"divergence_factor", cfg.train.divergence_factor}};
  j["estimator"] = {
      {"r_min", cfg.estimator.r_min},
      {"trend_ref",
       cfg.estimator.trend_ref == EstimatorConfig::TrendRef::WindowEnd
           ? "window_end"
           : "window_mean"},
      {"recompute_correlation", cfg.recompute_correlation}};
  j["correlation"] = {{"min_support", cfg.correlation.min_support},
                      {"end_window", cfg.correlation.end_window}};
  j["mape_epsilon"] = cfg.mape_epsilon;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["train_scale"] = cfg.train_scale == TimeScale::Fast ? "fast" : "slow";
  if (!cfg.report_table.empty())
    j["report"] = {{"table", cfg.report_table},
                   {"reference", cfg.report_reference}};
  return j;
}

// Materializes the configured dataset; for synthetic sources the full
// generation result (ground truth, corrupted points) is surfaced too.
inline TwoScaleDataset load_dataset(const RunConfig& cfg,
                                    SyntheticResult* synth_out = nullptr,
                                    IngestReport* report_out = nullptr) {
  if (cfg.csv) {
    auto [ds, report] = ingest_csv(cfg.csv->path, cfg.csv->schema);
    if (report_out) *report_out = report;
    return ds;
  }
  if (cfg.synthetic) {
    auto gen = generate_synthetic(*cfg.synthetic, cfg.seed);
    TwoScaleDataset ds = gen.dataset;
    if (synth_out) *synth_out = std::move(gen);
    return ds;
  }
  throw ConfigError("config needs either a dataset.csv or a synthetic spec");
}

}  // namespace loadfuse
