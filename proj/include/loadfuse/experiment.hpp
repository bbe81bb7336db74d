#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "loadfuse/metrics.hpp"
#include "loadfuse/pipeline.hpp"

namespace loadfuse {

// Chronological split over slow windows: [begin, train_end) trains models
// and statistics, [train_end, val_end) is reported as validation,
// [val_end, end) is the test range no method may see.
struct SplitConfig {
  double train_frac = 0.60;
  double val_frac = 0.15;
  // explicit window counts override the fractions when >= 0
  std::int64_t train_windows = -1;
  std::int64_t val_windows = -1;

  void validate() const {
    if (train_windows < 0 &&
        !(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1.0))
      throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
  }
};

struct SplitWindows {
  std::int64_t begin = 0;
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  std::int64_t end = 0;

  std::int64_t train_count() const { return train_end - begin; }
  std::int64_t val_count() const { return val_end - train_end; }
  std::int64_t test_count() const { return end - val_end; }
};

inline SplitWindows make_split(std::int64_t begin, std::int64_t end,
                               const SplitConfig& cfg) {
  cfg.validate();
  const std::int64_t n = end - begin;
  if (n < 3) throw EmptyInput("need at least 3 windows to split");
  SplitWindows s;
  s.begin = begin;
  s.end = end;
  if (cfg.train_windows >= 0) {
    const std::int64_t v = std::max<std::int64_t>(cfg.val_windows, 0);
    if (cfg.train_windows + v >= n)
      throw ConfigError("explicit split exceeds the available windows");
    s.train_end = begin + cfg.train_windows;
    s.val_end = s.train_end + v;
  } else {
    s.train_end = begin + static_cast<std::int64_t>(n * cfg.train_frac);
    s.val_end = s.train_end + static_cast<std::int64_t>(n * cfg.val_frac);
    s.train_end = std::max(s.train_end, begin + 1);
    s.val_end = std::min(std::max(s.val_end, s.train_end), end - 1);
  }
  if (s.train_end <= begin || s.val_end >= end)
    throw ConfigError("degenerate split");
  return s;
}

struct ExperimentConfig {
  std::string target;
  std::vector<Method> methods = {Method::Average, Method::PB, Method::CF,
                                 Method::CFDGP};
  SplitConfig split;
  TrainConfig train;
  EstimatorConfig estimator;
  CorrelationConfig correlation;
  double mape_epsilon = 1e-3;
  int threads = 1;
  bool recompute_correlation_online = false;  // expanding window per test step
};

struct ExperimentResult {
  SplitWindows split;
  std::int64_t test_start_fast = 0;
  Eigen::VectorXd truth_kw;
  std::vector<PseudoSeries> pseudo;    // one per method
  std::vector<MetricReport> reports;   // matching order
};

namespace detail {

inline MetricReport score_method(const TwoScaleDataset& ds,
                                 const PseudoSeries& ps,
                                 const Eigen::VectorXd& truth,
                                 const SplitWindows& split, double eps) {
  MetricReport rep;
  rep.method = method_name(ps.method);
  Eigen::VectorXd est =
      Eigen::Map<const Eigen::VectorXd>(ps.mean_kw.data(), ps.mean_kw.size());
  rep.rmse_kw = rmse(est, truth);
  auto m = mape(est, truth, eps);
  rep.mape_percent = m.percent;
  rep.mape_excluded = m.excluded;
  rep.points = static_cast<int>(truth.size());

  for (std::int64_t k = split.val_end; k < split.end; ++k) {
    MetricReport::WindowRow row;
    row.window = k;
    const std::int64_t off = (k - split.val_end) * ds.T;
    Eigen::VectorXd ew = est.segment(off, ds.T);
    Eigen::VectorXd tw = truth.segment(off, ds.T);
    row.rmse_kw = rmse(ew, tw);
    try {
      row.mape_percent = mape(ew, tw, eps).percent;
    } catch (const EmptyAfterExclusion&) {
      row.mape_percent = std::numeric_limits<double>::quiet_NaN();
    }
    row.energy_gap_kwh = window_energy_gap_kwh(ds, ps, k);
    rep.windows.push_back(row);
  }
  return rep;
}

}  // namespace detail

struct SynthesisResult {
  SplitWindows split;
  std::int64_t test_start_fast = 0;
  std::vector<PseudoSeries> pseudo;  // one per requested method
};

// Generates pseudo-measurement series for one target over the test
// windows. The target's fast series is stripped from the dataset every
// method sees; all model fitting and statistics use the training windows.
inline SynthesisResult synthesize_methods(const TwoScaleDataset& ds,
                                          const ExperimentConfig& cfg) {
  if (cfg.target.empty()) throw ConfigError("experiment needs a target node");
  auto slow_it = ds.slow.find(cfg.target);
  if (slow_it == ds.slow.end())
    throw MissingSlowReading("target '" + cfg.target + "' has no slow series");

  // Leak guard: methods work on a view without the target's fast channel.
  TwoScaleDataset masked = ds;
  masked.fast.erase(cfg.target);
  for (const auto& [id, s] : masked.fast)
    if (s.node_id == cfg.target)
      throw LeakageDetected("fast series for target '" + cfg.target +
                            "' still reachable under key '" + id + "'");

  const auto& slow = slow_it->second;
  SynthesisResult result;
  result.split = make_split(slow.start_index, slow.end_index(), cfg.split);
  const auto& split = result.split;
  result.test_start_fast = split.val_end * ds.T;
  const std::int64_t n_test_fast = split.test_count() * ds.T;

  EstimatorConfig est_cfg = cfg.estimator;
  est_cfg.history_end_window = split.train_end;
  CorrelationConfig corr_cfg = cfg.correlation;
  corr_cfg.end_window = split.train_end;

  const bool wants_cf =
      std::count(cfg.methods.begin(), cfg.methods.end(), Method::CF) > 0;
  const bool wants_cfdgp =
      std::count(cfg.methods.begin(), cfg.methods.end(), Method::CFDGP) > 0;
  const bool wants_pb =
      std::count(cfg.methods.begin(), cfg.methods.end(), Method::PB) > 0;

  CorrelationMatrix corr;
  if (wants_cf || wants_cfdgp) corr = correlation_matrix(masked, corr_cfg);

  // models trained on the training windows only
  TrainedNodeModel slow_model;
  std::vector<WindowPrediction> window_preds;
  if (wants_cfdgp || wants_pb) {
    slow_model = train_slow_node_model(masked, cfg.target, split.begin,
                                       split.train_end, cfg.train);
    window_preds =
        predict_windows(slow_model, split.val_end, split.test_count(), cfg.threads);
  }

  std::map<std::string, FastPredictions> neighbor_preds;
  if (wants_cfdgp) {
    std::vector<std::string> neighbor_ids;
    for (const auto& [id, s] : masked.fast) neighbor_ids.push_back(id);
    std::vector<FastPredictions> preds(neighbor_ids.size());
    std::vector<std::string> errors(neighbor_ids.size());

    auto work = [&](std::size_t j) {
      try {
        TrainConfig tc = cfg.train;
        tc.seed = cfg.train.seed ^ fnv1a(neighbor_ids[j].data(),
                                         neighbor_ids[j].size());
        auto m = train_fast_node_model(masked, neighbor_ids[j],
                                       split.begin * ds.T,
                                       split.train_end * ds.T, tc);
        preds[j] = predict_fast_range(m, result.test_start_fast,
                                      n_test_fast + 1, 1);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    };
    if (cfg.threads <= 1) {
      for (std::size_t j = 0; j < neighbor_ids.size(); ++j) work(j);
    } else {
      const int workers =
          std::min<std::size_t>(cfg.threads, neighbor_ids.size());
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
          for (std::size_t j = w; j < neighbor_ids.size(); j += workers)
            work(j);
        });
      for (auto& th : pool) th.join();
    }
    for (std::size_t j = 0; j < neighbor_ids.size(); ++j) {
      if (!errors[j].empty())
        throw UntrainedModel("neighbor '" + neighbor_ids[j] +
                             "': " + errors[j]);
      neighbor_preds[neighbor_ids[j]] = std::move(preds[j]);
    }
  }

  for (Method method : cfg.methods) {
    PseudoSeries acc;
    for (std::int64_t k = split.val_end; k < split.end; ++k) {
      EstimatorConfig window_cfg = est_cfg;
      CorrelationMatrix* corr_ptr = &corr;
      CorrelationMatrix online;
      if (cfg.recompute_correlation_online &&
          (method == Method::CF || method == Method::CFDGP)) {
        CorrelationConfig cc = corr_cfg;
        cc.end_window = k;  // everything reported before this window
        online = correlation_matrix(masked, cc);
        corr_ptr = &online;
      }
      PseudoSeries ps;
      switch (method) {
        case Method::Average:
          ps = baseline_average(masked, cfg.target, k);
          break;
        case Method::CF:
          ps = cf_estimate(masked, *corr_ptr, cfg.target, k, window_cfg);
          break;
        case Method::PB:
          ps = baseline_prediction_based(masked, cfg.target, k,
                                         window_preds[k - split.val_end]);
          break;
        case Method::CFDGP:
          ps = cf_dgp_window(masked, *corr_ptr, cfg.target, k,
                             window_preds[k - split.val_end], neighbor_preds,
                             window_cfg);
          break;
      }
      acc.append(ps);
    }
    result.pseudo.push_back(acc);
  }
  return result;
}

// Runs the full method comparison: synthesize on the masked dataset, then
// score each method against the withheld ground truth.
inline ExperimentResult run_experiment(const TwoScaleDataset& ds,
                                       const LoadSeries& target_truth_fast,
                                       const ExperimentConfig& cfg) {
  SynthesisResult synth = synthesize_methods(ds, cfg);

  ExperimentResult result;
  result.split = synth.split;
  result.test_start_fast = synth.test_start_fast;
  result.pseudo = std::move(synth.pseudo);

  const std::int64_t n_test_fast = result.split.test_count() * ds.T;
  result.truth_kw.resize(n_test_fast);
  for (std::int64_t i = 0; i < n_test_fast; ++i) {
    const std::int64_t t = result.test_start_fast + i;
    if (!target_truth_fast.has(t))
      throw MissingSlowReading("ground truth missing at fast index " +
                               std::to_string(t));
    result.truth_kw[i] = target_truth_fast.at(t);
  }
  for (const auto& ps : result.pseudo)
    result.reports.push_back(detail::score_method(
        ds, ps, result.truth_kw, result.split, cfg.mape_epsilon));
  return result;
}

// ---- reporting ----

inline void comparison_to_csv(std::ostream& out,
                              const std::vector<MetricReport>& reports) {
  out << "method,rmse_kw,mape_percent,mape_excluded,points\n";
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%d,%d\n", r.method.c_str(),
                  r.rmse_kw, r.mape_percent, r.mape_excluded, r.points);
    out << buf;
  }
}

inline void comparison_to_text(std::ostream& out,
                               const std::vector<MetricReport>& reports) {
  out << "Approach     RMSE (kW)    MAPE (%)\n";
  out << "-----------  -----------  -----------\n";
  char buf[96];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-11s  %11.4f  %11.4f\n",
                  r.method.c_str(), r.rmse_kw, r.mape_percent);
    out << buf;
  }
}

inline void window_breakdown_to_csv(std::ostream& out,
                                    const TwoScaleDataset& ds,
                                    const std::vector<MetricReport>& reports) {
  out << "method,window,window_ts,rmse_kw,mape_percent,energy_gap_kwh\n";
  char buf[160];
  for (const auto& r : reports)
    for (const auto& w : r.windows) {
      std::snprintf(buf, sizeof(buf), "%s,%lld,%s,%.6f,%.6f,%.9f\n",
                    r.method.c_str(), static_cast<long long>(w.window),
                    format_iso8601(ds.slow_index_time(w.window)).c_str(),
                    w.rmse_kw, w.mape_percent, w.energy_gap_kwh);
      out << buf;
    }
}

// Percentage reductions of the reference method against every other row;
// the headline is the best ("reduced by at most ...") across baselines.
struct ReductionReport {
  std::string reference;
  struct Row {
    std::string baseline;
    double rmse_reduction_pct;
    double mape_reduction_pct;
  };
  std::vector<Row> rows;
  double max_rmse_reduction_pct = 0.0;
  double max_mape_reduction_pct = 0.0;
};

inline ReductionReport headline_reductions(
    const std::vector<MetricReport>& reports,
    const std::string& reference = "CF-DGP") {
  const MetricReport* ref = nullptr;
  for (const auto& r : reports)
    if (r.method == reference) ref = &r;
  if (!ref) throw ConfigError("reference method '" + reference + "' missing");
  ReductionReport out;
  out.reference = reference;
  bool first = true;
  for (const auto& r : reports) {
    if (r.method == reference) continue;
    ReductionReport::Row row;
    row.baseline = r.method;
    row.rmse_reduction_pct = 100.0 * (r.rmse_kw - ref->rmse_kw) / r.rmse_kw;
    row.mape_reduction_pct =
        100.0 * (r.mape_percent - ref->mape_percent) / r.mape_percent;
    if (first || row.rmse_reduction_pct > out.max_rmse_reduction_pct)
      out.max_rmse_reduction_pct = row.rmse_reduction_pct;
    if (first || row.mape_reduction_pct > out.max_mape_reduction_pct)
      out.max_mape_reduction_pct = row.mape_reduction_pct;
    first = false;
    out.rows.push_back(row);
  }
  return out;
}

inline void reductions_to_csv(std::ostream& out, const ReductionReport& rep) {
  out << "baseline,rmse_reduction_pct,mape_reduction_pct\n";
  char buf[96];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f\n", r.baseline.c_str(),
                  r.rmse_reduction_pct, r.mape_reduction_pct);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "max,%.4f,%.4f\n", rep.max_rmse_reduction_pct,
                rep.max_mape_reduction_pct);
  out << buf;
}

// Pure regression benchmark on one node's fast series (no fusion): fit on
// the training windows, report validation and test MAPE of the predictive
// mean. The validation segment is the tail of the train+validate range.
struct RegressionScore {
  double val_mape = 0.0;
  double test_mape = 0.0;
  double val_rmse = 0.0;
  double test_rmse = 0.0;
};

inline RegressionScore regression_benchmark(const TwoScaleDataset& ds,
                                            const LoadSeries& truth_fast,
                                            const std::string& node,
                                            const SplitWindows& split,
                                            const TrainConfig& cfg,
                                            double mape_eps = 1e-3,
                                            int threads = 1) {
  auto model = train_fast_node_model(ds, node, split.begin * ds.T,
                                     split.train_end * ds.T, cfg);
  auto score_range = [&](std::int64_t w_begin, std::int64_t w_end, double& m,
                         double& r) {
    const std::int64_t t0 = w_begin * ds.T;
    const std::int64_t count = (w_end - w_begin) * ds.T;
    auto pred = predict_fast_range(model, t0, count, threads);
    Eigen::VectorXd truth(count);
    for (std::int64_t i = 0; i < count; ++i) truth[i] = truth_fast.at(t0 + i);
    m = mape(pred.mean_kw, truth, mape_eps).percent;
    r = rmse(pred.mean_kw, truth);
  };
  RegressionScore out;
  score_range(split.train_end, split.val_end, out.val_mape, out.val_rmse);
  score_range(split.val_end, split.end, out.test_mape, out.test_rmse);
  return out;
}

}  // namespace loadfuse
