#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"
#include "loadfuse/rng.hpp"
#include "loadfuse/series.hpp"
#include "loadfuse/timeutil.hpp"

namespace loadfuse {

// Multi-node load generator: every node is a smooth daily shape plus a
// node-specific weighting of 1-3 shared smooth latent factors plus
// independent Gaussian noise. Gross errors are additive spikes injected
// into the exposed fast channels only; slow readings always integrate the
// clean ground truth.
struct SyntheticSpec {
  int n_nodes = 10;
  int n_days = 30;
  int T = 12;
  double delta_t_hours = 1.0 / 12.0;
  std::string start_iso = "2017-06-01T00:00:00Z";

  // Daily shape sampled once per fast interval of one day; empty = default
  // double-bump residential profile.
  std::vector<double> daily_profile;
  double daily_amplitude_kw = 6.0;
  // per-node weight on the shared daily shape, drawn uniformly from this
  // range (customers differ in size); [1, 1] keeps every node identical
  double daily_weight_min = 1.0;
  double daily_weight_max = 1.0;

  int n_factors = 2;                         // 1..3 shared latent factors
  std::vector<std::vector<double>> weights;  // [node][factor], each in [-1,1]
  double factor_amplitude_kw = 0.3;

  double noise_scale_kw = 0.3;
  double gross_error_rate = 0.0;
  double gross_error_sigma = 5.0;  // spike magnitude, multiples of noise scale

  // Nodes whose fast series are exposed in the dataset; empty = all.
  std::vector<std::string> rtu_nodes;

  void validate() const {
    if (n_nodes < 1) throw InvalidSpec("n_nodes must be >= 1");
    if (n_days < 1) throw InvalidSpec("n_days must be >= 1");
    if (T < 1) throw InvalidSpec("T must be >= 1");
    if (!(delta_t_hours > 0)) throw InvalidSpec("delta_t must be > 0");
    if (n_factors < 1 || n_factors > 3)
      throw InvalidSpec("n_factors must be in 1..3");
    if (!weights.empty()) {
      if (static_cast<int>(weights.size()) != n_nodes)
        throw InvalidSpec("weights must have one row per node");
      for (const auto& row : weights) {
        if (static_cast<int>(row.size()) != n_factors)
          throw InvalidSpec("weights row length must equal n_factors");
        for (double w : row)
          if (!(w >= -1.0 && w <= 1.0))
            throw InvalidSpec("correlation weights must lie in [-1, 1]");
      }
    }
    if (!(daily_weight_min > 0) || daily_weight_max < daily_weight_min)
      throw InvalidSpec("daily weight range must satisfy 0 < min <= max");
    if (noise_scale_kw < 0) throw InvalidSpec("noise scale must be >= 0");
    if (gross_error_rate < 0 || gross_error_rate > 1)
      throw InvalidSpec("gross_error_rate must be in [0, 1]");
    if (gross_error_sigma < 0) throw InvalidSpec("gross_error_sigma must be >= 0");
    const double frac = 24.0 / delta_t_hours;
    if (std::fabs(frac - std::llround(frac)) > 1e-9)
      throw InvalidSpec("a day must be a whole number of fast intervals");
  }
};

struct CorruptedPoint {
  std::string node_id;
  std::int64_t fast_index = 0;
  double spike_kw = 0.0;
};

struct SyntheticResult {
  TwoScaleDataset dataset;
  std::map<std::string, LoadSeries> ground_truth;  // clean fast kW, all nodes
  std::vector<CorruptedPoint> corrupted;
  std::size_t clamped_points = 0;  // truth values floored at zero
};

inline std::string synthetic_node_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "node%02d", i + 1);
  return buf;
}

// Residential shape: breakfast, lunch, dinner and late-evening peaks at
// hour scale over a smooth base, normalized to mean 1.
inline std::vector<double> default_daily_profile(int points_per_day) {
  struct Peak {
    double at, sigma, amp;
  };
  static constexpr Peak kPeaks[] = {{8.0, 0.7, 0.8},
                                    {12.8, 0.8, 0.4},
                                    {18.6, 0.7, 1.5},
                                    {21.4, 0.9, 0.7}};
  std::vector<double> p(points_per_day);
  double mean = 0.0;
  for (int i = 0; i < points_per_day; ++i) {
    const double h = 24.0 * (i + 0.5) / points_per_day;
    double v = 0.40 + 0.18 * std::exp(-0.5 * std::pow((h - 19.0) / 3.5, 2));
    for (const auto& peak : kPeaks)
      v += peak.amp * std::exp(-0.5 * std::pow((h - peak.at) / peak.sigma, 2));
    p[i] = v;
    mean += v;
  }
  mean /= points_per_day;
  for (auto& v : p) v /= mean;
  return p;
}

namespace detail {

// Smooth shared factor: a few random low-frequency sinusoids, roughly unit
// variance. (sum of K sinusoids with amplitude sqrt(2/K) has variance ~1.)
struct LatentFactor {
  std::vector<double> amp, freq_per_day, phase;

  static LatentFactor draw(Rng& rng) {
    LatentFactor f;
    const int harmonics = 3;
    for (int h = 0; h < harmonics; ++h) {
      f.amp.push_back(std::sqrt(2.0 / harmonics) * (0.7 + 0.6 * rng.uniform()));
      f.freq_per_day.push_back(rng.uniform(0.25, 3.0));
      f.phase.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    }
    return f;
  }

  double at(double t_days) const {
    double v = 0.0;
    for (std::size_t h = 0; h < amp.size(); ++h)
      v += amp[h] * std::sin(2.0 * 3.14159265358979323846 *
                                 freq_per_day[h] * t_days +
                             phase[h]);
    return v;
  }
};

}  // namespace detail

inline SyntheticResult generate_synthetic(const SyntheticSpec& spec,
                                          std::uint64_t seed) {
  spec.validate();
  Rng root(seed);
  Rng factor_rng = root.derive(1);
  Rng noise_rng = root.derive(2);
  Rng gross_rng = root.derive(3);

  const int points_per_day = static_cast<int>(std::llround(24.0 / spec.delta_t_hours));
  const std::size_t n_points =
      static_cast<std::size_t>(points_per_day) * spec.n_days;
  std::vector<double> daily = spec.daily_profile.empty()
                                  ? default_daily_profile(points_per_day)
                                  : spec.daily_profile;
  if (static_cast<int>(daily.size()) != points_per_day)
    throw InvalidSpec("daily_profile must have one value per fast interval of a day");

  std::vector<detail::LatentFactor> factors;
  for (int k = 0; k < spec.n_factors; ++k)
    factors.push_back(detail::LatentFactor::draw(factor_rng));

  std::vector<std::vector<double>> weights = spec.weights;
  if (weights.empty()) {
    Rng wrng = root.derive(4);
    weights.resize(spec.n_nodes);
    for (auto& row : weights) {
      row.resize(spec.n_factors);
      for (auto& w : row) w = wrng.uniform(0.2, 1.0);  // mostly co-moving loads
    }
  }
  std::vector<double> daily_weights(spec.n_nodes, 1.0);
  if (spec.daily_weight_max > spec.daily_weight_min) {
    Rng drng = root.derive(5);
    for (auto& w : daily_weights)
      w = drng.uniform(spec.daily_weight_min, spec.daily_weight_max);
  } else {
    for (auto& w : daily_weights) w = spec.daily_weight_min;
  }

  SyntheticResult out;
  out.dataset.T = spec.T;
  out.dataset.delta_t_hours = spec.delta_t_hours;
  out.dataset.epoch_s = parse_iso8601(spec.start_iso);

  std::vector<std::string> rtu = spec.rtu_nodes;
  if (rtu.empty())
    for (int i = 0; i < spec.n_nodes; ++i) rtu.push_back(synthetic_node_name(i));

  for (int i = 0; i < spec.n_nodes; ++i) {
    const std::string node = synthetic_node_name(i);
    Rng node_noise = noise_rng.derive(static_cast<std::uint64_t>(i));
    LoadSeries truth(node, TimeScale::Fast, 0, std::vector<double>(n_points));
    for (std::size_t t = 0; t < n_points; ++t) {
      const double t_days =
          (static_cast<double>(t) + 0.5) * spec.delta_t_hours / 24.0;
      double v =
          daily_weights[i] * spec.daily_amplitude_kw * daily[t % points_per_day];
      for (int k = 0; k < spec.n_factors; ++k)
        v += spec.factor_amplitude_kw * weights[i][k] * factors[k].at(t_days);
      if (spec.noise_scale_kw > 0) v += spec.noise_scale_kw * node_noise.normal();
      if (v < 0.0) {
        v = 0.0;
        ++out.clamped_points;
      }
      truth.values[t] = v;
    }
    out.ground_truth[node] = truth;

    LoadSeries slow = aggregate_fast_to_slow(truth, spec.T, spec.delta_t_hours);
    out.dataset.slow[node] = slow;
  }

  for (const auto& node : rtu) {
    auto it = out.ground_truth.find(node);
    if (it == out.ground_truth.end())
      throw InvalidSpec("rtu node '" + node + "' is not a generated node");
    LoadSeries measured = it->second;
    if (spec.gross_error_rate > 0 && spec.noise_scale_kw > 0) {
      for (std::size_t t = 0; t < measured.size(); ++t) {
        if (!gross_rng.bernoulli(spec.gross_error_rate)) continue;
        const double sign = gross_rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double spike =
            sign * spec.gross_error_sigma * spec.noise_scale_kw;
        measured.values[t] += spike;
        out.corrupted.push_back({node, static_cast<std::int64_t>(t), spike});
      }
    }
    out.dataset.fast[node] = measured;
  }

  out.dataset.validate();
  return out;
}

}  // namespace loadfuse
