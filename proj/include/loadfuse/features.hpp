#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "loadfuse/errors.hpp"
#include "loadfuse/rng.hpp"
#include "loadfuse/series.hpp"

namespace loadfuse {

// Regression inputs for load series: the sine/cosine of the daily phase
// (which carry the recurring shape of the load) plus a normalized time
// index for slow drift. Phase leads the vector so that the deep stack's
// identity-skip forwards a bounded coordinate; a monotone skip would push
// hidden values outside the learned inducing support on extrapolation.
//
// Fast intervals are featurized at their midpoint, slow windows at the
// window end (the instant the meter reports). norm_span_hours fixes the
// time normalization and must be reused at prediction time.
struct FeatureRecipe {
  double delta_t_hours = 1.0 / 12.0;
  int T = 12;
  double epoch_day_offset_hours = 0.0;  // epoch's time of day
  double norm_span_hours = 24.0 * 30;

  static FeatureRecipe for_dataset(const TwoScaleDataset& ds,
                                   double span_hours) {
    FeatureRecipe r;
    r.delta_t_hours = ds.delta_t_hours;
    r.T = ds.T;
    const std::int64_t day_s = 86400;
    std::int64_t off = ds.epoch_s % day_s;
    if (off < 0) off += day_s;
    r.epoch_day_offset_hours = static_cast<double>(off) / 3600.0;
    r.norm_span_hours = span_hours;
    return r;
  }

  double fast_hours(std::int64_t fast_index) const {
    return epoch_day_offset_hours +
           (static_cast<double>(fast_index) + 0.5) * delta_t_hours;
  }

  double slow_hours(std::int64_t window_index) const {
    return epoch_day_offset_hours +
           static_cast<double>(window_index + 1) * T * delta_t_hours;
  }

  Eigen::RowVector3d features_at_hours(double h) const {
    const double frac = h / 24.0 - std::floor(h / 24.0);
    const double ang = 2.0 * 3.14159265358979323846 * frac;
    return {std::sin(ang), std::cos(ang), h / norm_span_hours};
  }

  static constexpr int kTimeDim = 2;  // index of the normalized time column

  Eigen::MatrixXd fast_features(std::int64_t start, std::int64_t count) const {
    Eigen::MatrixXd X(count, 3);
    for (std::int64_t i = 0; i < count; ++i)
      X.row(i) = features_at_hours(fast_hours(start + i));
    return X;
  }

  Eigen::MatrixXd slow_features(std::int64_t start, std::int64_t count) const {
    Eigen::MatrixXd X(count, 3);
    for (std::int64_t i = 0; i < count; ++i)
      X.row(i) = features_at_hours(slow_hours(start + i));
    return X;
  }
};

// Target standardization to zero mean / unit variance; constants are fit
// on the training targets and inverted on prediction.
struct Standardizer {
  double mean = 0.0;
  double sd = 1.0;

  static Standardizer fit(const Eigen::VectorXd& y) {
    if (y.size() == 0) throw EmptyInput("cannot standardize empty targets");
    Standardizer s;
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().sum() /
                       std::max<double>(1.0, y.size() - 1.0);
    s.sd = std::sqrt(std::max(var, 1e-12));
    return s;
  }

  Eigen::VectorXd transform(const Eigen::VectorXd& y) const {
    return (y.array() - mean) / sd;
  }
  double inverse_mean(double m) const { return m * sd + mean; }
  double inverse_variance(double v) const { return v * sd * sd; }
};

// Inducing-input initialization: k-means++ seeding plus a few Lloyd
// sweeps over the training inputs, deterministic given the rng.
inline Eigen::MatrixXd kmeans_inducing(const Eigen::MatrixXd& X, int M,
                                       Rng rng, int lloyd_iters = 10) {
  const int n = static_cast<int>(X.rows());
  if (M < 1) throw InvalidSpec("inducing count must be >= 1");
  if (M >= n) return X;  // degenerate: use the inputs themselves

  std::vector<int> centers;
  centers.push_back(static_cast<int>(rng.uniform_index(n)));
  Eigen::VectorXd d2 =
      (X.rowwise() - X.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < M) {
    const double total = d2.sum();
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.uniform_index(n));
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin(
        (X.rowwise() - X.row(pick)).rowwise().squaredNorm());
  }

  Eigen::MatrixXd C(M, X.cols());
  for (int j = 0; j < M; ++j) C.row(j) = X.row(centers[j]);

  std::vector<int> assign(n);
  for (int iter = 0; iter < lloyd_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bestd = (X.row(i) - C.row(0)).squaredNorm();
      for (int j = 1; j < M; ++j) {
        const double dj = (X.row(i) - C.row(j)).squaredNorm();
        if (dj < bestd) {
          bestd = dj;
          best = j;
        }
      }
      assign[i] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(M, X.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(M);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += X.row(i);
      counts[assign[i]] += 1.0;
    }
    for (int j = 0; j < M; ++j)
      if (counts[j] > 0.0) C.row(j) = sums.row(j) / counts[j];
  }
  return C;
}

}  // namespace loadfuse
