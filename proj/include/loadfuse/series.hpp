#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"

namespace loadfuse {

enum class TimeScale { Fast, Slow };

inline const char* to_string(TimeScale s) {
  return s == TimeScale::Fast ? "fast" : "slow";
}

// One node's time-indexed values on a single scale: kW for Fast power,
// kWh for Slow per-interval energy. Index i corresponds to global interval
// start_index + i on that scale's grid; gaps are kept as explicit missing
// entries, never dropped.
struct LoadSeries {
  std::string node_id;
  TimeScale scale = TimeScale::Fast;
  std::int64_t start_index = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> present;  // 1 = value valid, 0 = gap

  LoadSeries() = default;

  LoadSeries(std::string node, TimeScale sc, std::int64_t start,
             std::vector<double> vals)
      : node_id(std::move(node)),
        scale(sc),
        start_index(start),
        values(std::move(vals)),
        present(values.size(), 1) {}

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  std::int64_t end_index() const {
    return start_index + static_cast<std::int64_t>(values.size());
  }

  bool covers(std::int64_t global_index) const {
    return global_index >= start_index && global_index < end_index();
  }

  bool has(std::int64_t global_index) const {
    return covers(global_index) &&
           present[static_cast<std::size_t>(global_index - start_index)];
  }

  double at(std::int64_t global_index) const {
    return values[static_cast<std::size_t>(global_index - start_index)];
  }

  void set_missing(std::size_t i) {
    present[i] = 0;
    values[i] = 0.0;
  }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto p : present) n += (p == 0);
    return n;
  }

  // Finite where present; Slow energies non-negative unless bidirectional
  // flow is allowed.
  void validate(bool allow_negative_energy = false) const {
    if (values.size() != present.size())
      throw DimensionMismatch("series '" + node_id +
                              "': value/presence length mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!present[i]) continue;
      if (!std::isfinite(values[i]))
        throw NonFinite("series '" + node_id + "': non-finite value at index " +
                        std::to_string(start_index + (std::int64_t)i));
      if (scale == TimeScale::Slow && !allow_negative_energy &&
          values[i] < 0.0)
        throw InvalidSpec("series '" + node_id +
                          "': negative energy at index " +
                          std::to_string(start_index + (std::int64_t)i) +
                          " (enable bidirectional flow to allow)");
    }
  }
};

inline bool series_equal(const LoadSeries& a, const LoadSeries& b) {
  if (a.node_id != b.node_id || a.scale != b.scale ||
      a.start_index != b.start_index || a.values.size() != b.values.size())
    return false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.present[i] != b.present[i]) return false;
    if (a.present[i] && a.values[i] != b.values[i]) return false;
  }
  return true;
}

// Aggregates a fast power series into per-window cumulative energy:
// W_k = sum over the window's T intervals of P_t * delta_t. The series
// length must be a whole number of windows and its start must sit on a
// window boundary. A window containing any gap yields a missing energy
// value rather than a biased partial sum.
inline LoadSeries aggregate_fast_to_slow(const LoadSeries& series, int T,
                                         double delta_t_hours) {
  if (series.scale != TimeScale::Fast)
    throw DimensionMismatch("aggregate_fast_to_slow expects a Fast series");
  if (T < 1) throw InvalidSpec("T must be >= 1");
  if (!(delta_t_hours > 0.0)) throw InvalidSpec("delta_t must be > 0");
  if (series.values.size() % static_cast<std::size_t>(T) != 0)
    throw NonMultipleLength("series '" + series.node_id + "' has " +
                            std::to_string(series.values.size()) +
                            " values, not a multiple of T=" +
                            std::to_string(T));
  if (series.start_index % T != 0)
    throw AlignmentError("series '" + series.node_id + "' starts at index " +
                         std::to_string(series.start_index) +
                         ", not on a window boundary (T=" + std::to_string(T) +
                         ")");

  LoadSeries out;
  out.node_id = series.node_id;
  out.scale = TimeScale::Slow;
  out.start_index = series.start_index / T;
  const std::size_t n_windows = series.values.size() / static_cast<std::size_t>(T);
  out.values.assign(n_windows, 0.0);
  out.present.assign(n_windows, 1);
  for (std::size_t k = 0; k < n_windows; ++k) {
    double acc = 0.0;
    bool complete = true;
    for (int t = 0; t < T; ++t) {
      const std::size_t i = k * static_cast<std::size_t>(T) + t;
      if (!series.present[i]) {
        complete = false;
        break;
      }
      acc += series.values[i] * delta_t_hours;
    }
    if (complete)
      out.values[k] = acc;
    else
      out.set_missing(k);
  }
  return out;
}

// Drops a trailing partial window, then aggregates. Used where a coarse
// view of an arbitrary-length fast series is wanted (correlation prep),
// as opposed to the strict measurement-model aggregation above.
inline LoadSeries aggregate_full_windows(const LoadSeries& series, int T,
                                         double delta_t_hours) {
  if (T < 1) throw InvalidSpec("T must be >= 1");
  LoadSeries trimmed = series;
  auto ceil_div = [](std::int64_t a, std::int64_t b) {
    return a / b + ((a % b > 0) ? 1 : 0);
  };
  const std::int64_t first_window = ceil_div(series.start_index, T);
  const std::int64_t lead = first_window * T - series.start_index;
  if (lead > static_cast<std::int64_t>(trimmed.values.size())) {
    trimmed.values.clear();
    trimmed.present.clear();
    trimmed.start_index = first_window * T;
    return aggregate_fast_to_slow(trimmed, T, delta_t_hours);
  }
  trimmed.values.erase(trimmed.values.begin(), trimmed.values.begin() + lead);
  trimmed.present.erase(trimmed.present.begin(), trimmed.present.begin() + lead);
  trimmed.start_index = first_window * T;
  const std::size_t keep =
      (trimmed.values.size() / static_cast<std::size_t>(T)) *
      static_cast<std::size_t>(T);
  trimmed.values.resize(keep);
  trimmed.present.resize(keep);
  return aggregate_fast_to_slow(trimmed, T, delta_t_hours);
}

// Aligned fast/slow series for many nodes. T fast intervals make one slow
// window; slow index k covers fast indices [k*T, (k+1)*T). Index 0 on both
// grids is anchored at epoch_s (UTC seconds). Immutable by convention once
// built.
struct TwoScaleDataset {
  std::map<std::string, LoadSeries> fast;
  std::map<std::string, LoadSeries> slow;
  int T = 1;
  double delta_t_hours = 1.0;
  std::int64_t epoch_s = 0;
  bool allow_negative_energy = false;

  double window_hours() const { return T * delta_t_hours; }
  std::int64_t fast_step_s() const {
    return static_cast<std::int64_t>(std::llround(delta_t_hours * 3600.0));
  }

  std::int64_t fast_index_time(std::int64_t t) const {
    return epoch_s + t * fast_step_s();
  }
  std::int64_t slow_index_time(std::int64_t k) const {
    return epoch_s + k * T * fast_step_s();
  }

  void validate() const {
    if (T < 1) throw InvalidSpec("T must be >= 1");
    if (!(delta_t_hours > 0.0)) throw InvalidSpec("delta_t must be > 0");
    const double step_s = delta_t_hours * 3600.0;
    if (std::fabs(step_s - std::llround(step_s)) > 1e-6)
      throw InvalidSpec("delta_t must be a whole number of seconds");
    for (const auto& [id, s] : fast) {
      if (s.node_id != id)
        throw InvalidSpec("fast map key '" + id + "' != series node_id '" +
                          s.node_id + "'");
      if (s.scale != TimeScale::Fast)
        throw InvalidSpec("fast map holds a non-fast series for '" + id + "'");
      s.validate(true);  // fast power may be negative (net metering)
    }
    for (const auto& [id, s] : slow) {
      if (s.node_id != id)
        throw InvalidSpec("slow map key '" + id + "' != series node_id '" +
                          s.node_id + "'");
      if (s.scale != TimeScale::Slow)
        throw InvalidSpec("slow map holds a non-slow series for '" + id + "'");
      s.validate(allow_negative_energy);
    }
  }

  std::vector<std::string> node_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, s] : slow) ids.push_back(id);
    for (const auto& [id, s] : fast)
      if (!slow.count(id)) ids.push_back(id);
    return ids;
  }

  // Slow energy view for correlation work: the node's own slow series if
  // present, otherwise its fast series aggregated over full windows.
  LoadSeries slow_energy_view(const std::string& node) const {
    auto it = slow.find(node);
    if (it != slow.end()) return it->second;
    auto fit = fast.find(node);
    if (fit == fast.end())
      throw MissingSlowReading("node '" + node + "' has no series at all");
    return aggregate_full_windows(fit->second, T, delta_t_hours);
  }
};

inline bool dataset_equal(const TwoScaleDataset& a, const TwoScaleDataset& b) {
  if (a.T != b.T || a.delta_t_hours != b.delta_t_hours) return false;
  if (a.fast.size() != b.fast.size() || a.slow.size() != b.slow.size())
    return false;
  // Compare physical timestamps, not the (epoch, index) decomposition.
  const std::int64_t shift_fast = (a.epoch_s - b.epoch_s) / a.fast_step_s();
  if ((a.epoch_s - b.epoch_s) % a.fast_step_s() != 0) return false;
  if (shift_fast % a.T != 0 && !a.slow.empty()) return false;
  auto shifted_equal = [](const LoadSeries& x, LoadSeries y,
                          std::int64_t shift) {
    y.start_index -= shift;
    return series_equal(x, y);
  };
  for (const auto& [id, s] : a.fast) {
    auto it = b.fast.find(id);
    if (it == b.fast.end() || !shifted_equal(s, it->second, shift_fast))
      return false;
  }
  for (const auto& [id, s] : a.slow) {
    auto it = b.slow.find(id);
    if (it == b.slow.end() ||
        !shifted_equal(s, it->second, shift_fast / a.T))
      return false;
  }
  return true;
}

}  // namespace loadfuse
