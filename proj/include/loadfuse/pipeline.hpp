#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "loadfuse/estimators.hpp"
#include "loadfuse/series.hpp"
#include "loadfuse/train.hpp"

namespace loadfuse {

// A DGP bound to one node's series together with everything needed to
// reproduce its predictions: the feature recipe, the training seed and a
// fingerprint of the data it saw.
struct TrainedNodeModel {
  std::string node_id;
  TimeScale scale = TimeScale::Fast;
  DGPModel model;
  FeatureRecipe recipe;
  std::uint64_t seed = 0;
  std::uint64_t data_fingerprint = 0;
  int predict_samples = 200;
};

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 1469598103934665603ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t series_fingerprint(const LoadSeries& s,
                                        std::int64_t begin, std::int64_t end) {
  std::uint64_t h = fnv1a(s.node_id.data(), s.node_id.size());
  for (std::int64_t k = std::max(begin, s.start_index);
       k < std::min(end, s.end_index()); ++k) {
    const std::uint8_t present = s.has(k) ? 1 : 0;
    h = fnv1a(&present, 1, h);
    if (present) {
      const double v = s.at(k);
      h = fnv1a(&v, sizeof(v), h);
    }
  }
  return h;
}

namespace detail {

inline double dataset_span_hours(const TwoScaleDataset& ds) {
  std::int64_t max_fast = 0;
  for (const auto& [id, s] : ds.fast) max_fast = std::max(max_fast, s.end_index());
  for (const auto& [id, s] : ds.slow)
    max_fast = std::max(max_fast, s.end_index() * ds.T);
  return std::max(24.0, max_fast * ds.delta_t_hours);
}

}  // namespace detail

// Fits a DGP to a node's fast power over [fast_begin, fast_end); missing
// points are skipped, not imputed.
inline TrainedNodeModel train_fast_node_model(const TwoScaleDataset& ds,
                                              const std::string& node,
                                              std::int64_t fast_begin,
                                              std::int64_t fast_end,
                                              const TrainConfig& cfg,
                                              TrainingTrace* trace_out = nullptr) {
  auto it = ds.fast.find(node);
  if (it == ds.fast.end())
    throw MissingSlowReading("node '" + node + "' has no fast series");
  const auto& s = it->second;

  TrainedNodeModel out;
  out.node_id = node;
  out.scale = TimeScale::Fast;
  out.recipe = FeatureRecipe::for_dataset(ds, detail::dataset_span_hours(ds));
  out.seed = cfg.seed;
  out.predict_samples = cfg.predict_samples;
  out.data_fingerprint = series_fingerprint(s, fast_begin, fast_end);

  std::vector<std::int64_t> idx;
  for (std::int64_t t = std::max(fast_begin, s.start_index);
       t < std::min(fast_end, s.end_index()); ++t)
    if (s.has(t)) idx.push_back(t);
  if (idx.size() < 2)
    throw EmptyInput("node '" + node + "' has too few fast points to fit");

  Eigen::MatrixXd X(idx.size(), 3);
  Eigen::VectorXd Y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    X.row(i) = out.recipe.features_at_hours(out.recipe.fast_hours(idx[i]));
    Y[i] = s.at(idx[i]);
  }
  out.model = make_dgp_model(X, cfg.layers, cfg.inducing, cfg.seed,
                             cfg.init_variance, cfg.init_lengthscale,
                             cfg.init_noise);
  out.model.layers[0].kernel.log_lengthscales[FeatureRecipe::kTimeDim] =
      std::log(cfg.init_time_lengthscale);
  if (cfg.init_inner_from_targets)
    initialize_hidden_embedding(out.model, X,
                                Standardizer::fit(Y).transform(Y), cfg.seed);
  auto trace = dgp_train(out.model, X, Y, cfg);
  if (trace_out) *trace_out = std::move(trace);
  return out;
}

// Fits a DGP to a node's slow cumulative energy over window indices
// [window_begin, window_end).
inline TrainedNodeModel train_slow_node_model(const TwoScaleDataset& ds,
                                              const std::string& node,
                                              std::int64_t window_begin,
                                              std::int64_t window_end,
                                              const TrainConfig& cfg,
                                              TrainingTrace* trace_out = nullptr) {
  auto it = ds.slow.find(node);
  if (it == ds.slow.end())
    throw MissingSlowReading("node '" + node + "' has no slow series");
  const auto& s = it->second;

  TrainedNodeModel out;
  out.node_id = node;
  out.scale = TimeScale::Slow;
  out.recipe = FeatureRecipe::for_dataset(ds, detail::dataset_span_hours(ds));
  out.seed = cfg.seed;
  out.predict_samples = cfg.predict_samples;
  out.data_fingerprint = series_fingerprint(s, window_begin, window_end);

  std::vector<std::int64_t> idx;
  for (std::int64_t k = std::max(window_begin, s.start_index);
       k < std::min(window_end, s.end_index()); ++k)
    if (s.has(k)) idx.push_back(k);
  if (idx.size() < 2)
    throw EmptyInput("node '" + node + "' has too few readings to fit");

  Eigen::MatrixXd X(idx.size(), 3);
  Eigen::VectorXd Y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    X.row(i) = out.recipe.features_at_hours(out.recipe.slow_hours(idx[i]));
    Y[i] = s.at(idx[i]);
  }
  out.model = make_dgp_model(X, cfg.layers, cfg.inducing, cfg.seed,
                             cfg.init_variance, cfg.init_lengthscale,
                             cfg.init_noise);
  out.model.layers[0].kernel.log_lengthscales[FeatureRecipe::kTimeDim] =
      std::log(cfg.init_time_lengthscale);
  if (cfg.init_inner_from_targets)
    initialize_hidden_embedding(out.model, X,
                                Standardizer::fit(Y).transform(Y), cfg.seed);
  auto trace = dgp_train(out.model, X, Y, cfg);
  if (trace_out) *trace_out = std::move(trace);
  return out;
}

// Predictive means/variances over a contiguous fast range, one sampled
// batch so the draw streams depend only on the seed and range.
inline FastPredictions predict_fast_range(const TrainedNodeModel& m,
                                          std::int64_t fast_begin,
                                          std::int64_t count,
                                          int threads = 1) {
  if (m.scale != TimeScale::Fast)
    throw UntrainedModel("model for '" + m.node_id + "' is not a fast model");
  Eigen::MatrixXd X = m.recipe.fast_features(fast_begin, count);
  auto pred = dgp_predict(m.model, X, m.predict_samples,
                          m.seed ^ 0x9e3779b97f4a7c15ULL, threads);
  FastPredictions out;
  out.start_fast_index = fast_begin;
  out.mean_kw = pred.mean;
  out.var_kw2 = pred.variance;
  return out;
}

// Predicted cumulative readings for windows [window_begin, window_begin+count).
inline std::vector<WindowPrediction> predict_windows(const TrainedNodeModel& m,
                                                     std::int64_t window_begin,
                                                     std::int64_t count,
                                                     int threads = 1) {
  if (m.scale != TimeScale::Slow)
    throw UntrainedModel("model for '" + m.node_id + "' is not a slow model");
  Eigen::MatrixXd X = m.recipe.slow_features(window_begin, count);
  auto pred = dgp_predict(m.model, X, m.predict_samples,
                          m.seed ^ 0xbf58476d1ce4e5b9ULL, threads);
  std::vector<WindowPrediction> out(count);
  for (std::int64_t i = 0; i < count; ++i)
    out[i] = {pred.mean[i], pred.variance[i]};
  return out;
}

// Spec-level fused estimate for a single window, predicting on demand from
// the trained models.
inline PseudoSeries cf_dgp_estimate(
    const TwoScaleDataset& ds, const CorrelationMatrix& corr,
    const std::string& target, std::int64_t window,
    const TrainedNodeModel& slow_model,
    const std::map<std::string, TrainedNodeModel>& fast_models,
    const EstimatorConfig& cfg = {}, int threads = 1) {
  if (slow_model.node_id != target)
    throw UntrainedModel("slow model belongs to '" + slow_model.node_id + "'");
  auto wp = predict_windows(slow_model, window, 1, threads);
  std::map<std::string, FastPredictions> preds;
  for (const auto& [node, m] : fast_models)
    preds[node] = predict_fast_range(m, window * ds.T, ds.T + 1, threads);
  return cf_dgp_window(ds, corr, target, window, wp[0], preds, cfg);
}

}  // namespace loadfuse
