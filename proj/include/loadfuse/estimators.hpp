#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "loadfuse/correlation.hpp"
#include "loadfuse/errors.hpp"
#include "loadfuse/series.hpp"
#include "loadfuse/timeutil.hpp"

namespace loadfuse {

enum class Method { CF, CFDGP, Average, PB };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::CF: return "CF";
    case Method::CFDGP: return "CF-DGP";
    case Method::Average: return "Average";
    case Method::PB: return "PB";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "CF" || s == "cf") return Method::CF;
  if (s == "CF-DGP" || s == "cf-dgp" || s == "cf_dgp") return Method::CFDGP;
  if (s == "Average" || s == "average") return Method::Average;
  if (s == "PB" || s == "pb") return Method::PB;
  throw ConfigError("unknown method '" + s + "'");
}

// Fast-scale pseudo-measurements for one node: per-point mean (kW) and,
// for the GP-backed method, propagated variance. window_start records the
// slow window each point was synthesized in.
struct PseudoSeries {
  std::string node_id;
  Method method = Method::Average;
  std::int64_t start_fast_index = 0;
  std::vector<double> mean_kw;
  std::vector<double> var_kw2;  // parallel to mean_kw when has_variance
  bool has_variance = false;
  std::vector<std::int64_t> window_start;

  void append(const PseudoSeries& next) {
    if (mean_kw.empty()) {
      *this = next;
      return;
    }
    if (next.method != method || next.node_id != node_id)
      throw ConfigError("appending mismatched pseudo series");
    if (next.start_fast_index !=
        start_fast_index + static_cast<std::int64_t>(mean_kw.size()))
      throw AlignmentError("pseudo series append is not contiguous");
    mean_kw.insert(mean_kw.end(), next.mean_kw.begin(), next.mean_kw.end());
    var_kw2.insert(var_kw2.end(), next.var_kw2.begin(), next.var_kw2.end());
    window_start.insert(window_start.end(), next.window_start.begin(),
                        next.window_start.end());
  }
};

inline void emit_pseudo_csv(std::ostream& out, const TwoScaleDataset& ds,
                            const std::vector<PseudoSeries>& series) {
  out << "node_id,method,timestamp,mean_kw,var_kw2,window_ts\n";
  char buf[48];
  for (const auto& ps : series) {
    for (std::size_t i = 0; i < ps.mean_kw.size(); ++i) {
      const std::int64_t t = ps.start_fast_index + (std::int64_t)i;
      out << ps.node_id << ',' << method_name(ps.method) << ','
          << format_iso8601(ds.fast_index_time(t)) << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", ps.mean_kw[i]);
      out << buf << ',';
      if (ps.has_variance) {
        std::snprintf(buf, sizeof(buf), "%.17g", ps.var_kw2[i]);
        out << buf;
      }
      out << ',' << format_iso8601(ds.slow_index_time(ps.window_start[i]))
          << '\n';
    }
  }
}

struct EstimatorConfig {
  double r_min = 0.0;                    // drop neighbors with |r| below this
  std::int64_t history_end_window = -1;  // stats use slow windows < this
  enum class TrendRef { WindowEnd, WindowMean };
  TrendRef trend_ref = TrendRef::WindowEnd;
};

namespace detail {

// Historical mean power implied by slow energy: Wbar / (T * dt), kW.
inline double slow_mean_power(const TwoScaleDataset& ds,
                              const std::string& node,
                              std::int64_t end_window) {
  auto it = ds.slow.find(node);
  if (it == ds.slow.end())
    throw MissingSlowReading("node '" + node + "' has no slow series");
  const auto& s = it->second;
  double acc = 0.0;
  int n = 0;
  std::int64_t hi = s.end_index();
  if (end_window >= 0) hi = std::min(hi, end_window);
  for (std::int64_t k = s.start_index; k < hi; ++k)
    if (s.has(k)) {
      acc += s.at(k);
      ++n;
    }
  if (n == 0)
    throw MissingSlowReading("node '" + node + "' has no usable history");
  return acc / n / (ds.T * ds.delta_t_hours);
}

inline double fast_mean_power(const TwoScaleDataset& ds,
                              const std::string& node,
                              std::int64_t end_window) {
  const auto& s = ds.fast.at(node);
  double acc = 0.0;
  int n = 0;
  std::int64_t hi = s.end_index();
  if (end_window >= 0) hi = std::min(hi, end_window * ds.T);
  for (std::int64_t t = s.start_index; t < hi; ++t)
    if (s.has(t)) {
      acc += s.at(t);
      ++n;
    }
  if (n == 0)
    throw MissingSlowReading("node '" + node + "' has no usable fast history");
  return acc / n;
}

struct Neighbor {
  std::string node;
  double r;
};

inline std::vector<Neighbor> usable_neighbors(const TwoScaleDataset& ds,
                                              const CorrelationMatrix& corr,
                                              const std::string& target,
                                              const EstimatorConfig& cfg) {
  const int i = corr.index_of(target);
  std::vector<Neighbor> out;
  for (std::size_t j = 0; j < corr.nodes.size(); ++j) {
    if (static_cast<int>(j) == i) continue;
    if (!corr.pair_usable(i, static_cast<int>(j))) continue;
    const double rij = corr.r(i, static_cast<int>(j));
    if (std::fabs(rij) < cfg.r_min) continue;
    if (!ds.fast.count(corr.nodes[j])) continue;
    out.push_back({corr.nodes[j], rij});
  }
  if (out.empty())
    throw NoUsableNeighbors("no usable fast-measured neighbor for '" + target +
                            "'");
  double wsum = 0.0;
  for (const auto& nb : out) wsum += std::fabs(nb.r);
  if (wsum <= 0.0)
    throw ZeroWeightSum("all usable correlations are exactly zero for '" +
                        target + "'");
  return out;
}

}  // namespace detail

// Average baseline: the realized cumulative reading spread uniformly over
// its window, in kW.
inline PseudoSeries baseline_average(const TwoScaleDataset& ds,
                                     const std::string& node,
                                     std::int64_t window) {
  auto it = ds.slow.find(node);
  if (it == ds.slow.end() || !it->second.has(window))
    throw MissingSlowReading("node '" + node + "' has no reading for window " +
                             std::to_string(window));
  const double p = it->second.at(window) / (ds.T * ds.delta_t_hours);
  PseudoSeries out;
  out.node_id = node;
  out.method = Method::Average;
  out.start_fast_index = window * ds.T;
  out.mean_kw.assign(ds.T, p);
  out.var_kw2.assign(ds.T, 0.0);
  out.window_start.assign(ds.T, window);
  return out;
}

// Basic correlation-weighted estimate: the node's historical mean level
// plus the correlation-weighted deviation of each live neighbor from its
// own historical mean. Missing neighbor readings drop out of that instant
// with the weights renormalized; an instant with no readings at all falls
// back to the mean level.
inline PseudoSeries cf_estimate(const TwoScaleDataset& ds,
                                const CorrelationMatrix& corr,
                                const std::string& target, std::int64_t window,
                                const EstimatorConfig& cfg = {}) {
  auto neighbors = detail::usable_neighbors(ds, corr, target, cfg);
  const double p_bar_i =
      detail::slow_mean_power(ds, target, cfg.history_end_window);
  std::vector<double> p_bar_j(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j)
    p_bar_j[j] =
        detail::fast_mean_power(ds, neighbors[j].node, cfg.history_end_window);

  PseudoSeries out;
  out.node_id = target;
  out.method = Method::CF;
  out.start_fast_index = window * ds.T;
  out.mean_kw.resize(ds.T);
  out.var_kw2.assign(ds.T, 0.0);
  out.window_start.assign(ds.T, window);

  for (int s = 0; s < ds.T; ++s) {
    const std::int64_t t = window * ds.T + s;
    double num = 0.0, wsum = 0.0;
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
      const auto& series = ds.fast.at(neighbors[j].node);
      if (!series.has(t)) continue;
      num += (series.at(t) - p_bar_j[j]) * neighbors[j].r;
      wsum += std::fabs(neighbors[j].r);
    }
    out.mean_kw[s] = wsum > 0.0 ? p_bar_i + num / wsum : p_bar_i;
  }
  return out;
}

// GP-side inputs to the fused estimate, precomputed by the caller.
struct WindowPrediction {
  double mean_kwh = 0.0;
  double var_kwh2 = 0.0;
};

struct FastPredictions {
  std::int64_t start_fast_index = 0;
  Eigen::VectorXd mean_kw;
  Eigen::VectorXd var_kw2;

  bool covers(std::int64_t t) const {
    return t >= start_fast_index &&
           t < start_fast_index + mean_kw.size();
  }
  double mean_at(std::int64_t t) const {
    return mean_kw[static_cast<int>(t - start_fast_index)];
  }
  double var_at(std::int64_t t) const {
    return var_kw2[static_cast<int>(t - start_fast_index)];
  }
};

// Fused estimate over one window [kT, (k+1)T): the predicted next
// cumulative reading spread over the window plus correlation-weighted
// neighbor trends, where every neighbor quantity is a GP predictive mean
// rather than a raw measurement. Trend reference is the window-end mean
// (or the window average behind the config flag). Variances propagate
// under independence.
inline PseudoSeries cf_dgp_window(
    const TwoScaleDataset& ds, const CorrelationMatrix& corr,
    const std::string& target, std::int64_t window,
    const WindowPrediction& next_reading,
    const std::map<std::string, FastPredictions>& neighbor_preds,
    const EstimatorConfig& cfg = {}) {
  auto neighbors = detail::usable_neighbors(ds, corr, target, cfg);

  const double denom_kwh_to_kw = ds.T * ds.delta_t_hours;
  const double avg_term = next_reading.mean_kwh / denom_kwh_to_kw;
  const double avg_var =
      next_reading.var_kwh2 / (denom_kwh_to_kw * denom_kwh_to_kw);

  double wsum = 0.0;
  for (const auto& nb : neighbors) wsum += std::fabs(nb.r);

  struct Ref {
    double mean, var;
  };
  std::vector<Ref> refs(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    auto it = neighbor_preds.find(neighbors[j].node);
    if (it == neighbor_preds.end())
      throw UntrainedModel("no fast model predictions for neighbor '" +
                           neighbors[j].node + "'");
    const auto& fp = it->second;
    if (cfg.trend_ref == EstimatorConfig::TrendRef::WindowEnd) {
      const std::int64_t ref_t = (window + 1) * ds.T;
      if (!fp.covers(ref_t))
        throw UntrainedModel("predictions for '" + neighbors[j].node +
                             "' do not reach the window end");
      refs[j] = {fp.mean_at(ref_t), fp.var_at(ref_t)};
    } else {
      double m = 0.0, v = 0.0;
      for (int s = 0; s < ds.T; ++s) {
        const std::int64_t t = window * ds.T + s;
        if (!fp.covers(t))
          throw UntrainedModel("predictions for '" + neighbors[j].node +
                               "' do not cover the window");
        m += fp.mean_at(t);
        v += fp.var_at(t);
      }
      refs[j] = {m / ds.T, v / (double(ds.T) * ds.T)};
    }
  }

  PseudoSeries out;
  out.node_id = target;
  out.method = Method::CFDGP;
  out.has_variance = true;
  out.start_fast_index = window * ds.T;
  out.mean_kw.resize(ds.T);
  out.var_kw2.resize(ds.T);
  out.window_start.assign(ds.T, window);

  for (int s = 0; s < ds.T; ++s) {
    const std::int64_t t = window * ds.T + s;
    double num = 0.0, var_num = 0.0;
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
      const auto& fp = neighbor_preds.at(neighbors[j].node);
      if (!fp.covers(t))
        throw UntrainedModel("predictions for '" + neighbors[j].node +
                             "' do not cover the window");
      num += neighbors[j].r * (fp.mean_at(t) - refs[j].mean);
      var_num += neighbors[j].r * neighbors[j].r *
                 (fp.var_at(t) + refs[j].var);
    }
    out.mean_kw[s] = avg_term + num / wsum;
    out.var_kw2[s] = avg_var + var_num / (wsum * wsum);
  }
  return out;
}

// Prediction-based baseline: predict the window's cumulative reading and
// interpolate on the line through the two average-power anchors — the
// previous realized reading and the predicted one, each placed at its
// window center, where a window average actually lives. On a linear ramp
// this reproduces the truth exactly and preserves the predicted window
// mean.
inline PseudoSeries baseline_prediction_based(
    const TwoScaleDataset& ds, const std::string& node, std::int64_t window,
    const WindowPrediction& next_reading) {
  auto it = ds.slow.find(node);
  if (it == ds.slow.end() || !it->second.has(window - 1))
    throw MissingSlowReading("node '" + node +
                             "' has no reading for the previous window " +
                             std::to_string(window - 1));
  const double denom = ds.T * ds.delta_t_hours;
  const double a0 = it->second.at(window - 1) / denom;
  const double a1 = next_reading.mean_kwh / denom;

  PseudoSeries out;
  out.node_id = node;
  out.method = Method::PB;
  out.start_fast_index = window * ds.T;
  out.mean_kw.resize(ds.T);
  out.var_kw2.assign(ds.T, 0.0);
  out.window_start.assign(ds.T, window);
  // interval midpoint s+0.5 sits (s + 0.5 + T/2) / T of the way from the
  // previous window center to the current one
  for (int s = 0; s < ds.T; ++s)
    out.mean_kw[s] = a0 + (a1 - a0) * (s + 0.5 + 0.5 * ds.T) / ds.T;
  return out;
}

// Energy-consistency diagnostic: integrate a pseudo window back to kWh
// and report the gap to the realized reading.
inline double window_energy_gap_kwh(const TwoScaleDataset& ds,
                                    const PseudoSeries& ps,
                                    std::int64_t window) {
  auto it = ds.slow.find(ps.node_id);
  if (it == ds.slow.end() || !it->second.has(window))
    throw MissingSlowReading("no realized reading for window " +
                             std::to_string(window));
  double energy = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < ps.mean_kw.size(); ++i) {
    if (ps.window_start[i] != window) continue;
    energy += ps.mean_kw[i] * ds.delta_t_hours;
    any = true;
  }
  if (!any)
    throw MissingSlowReading("pseudo series does not cover window " +
                             std::to_string(window));
  return energy - it->second.at(window);
}

}  // namespace loadfuse
