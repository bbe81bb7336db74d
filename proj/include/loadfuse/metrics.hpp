#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"

namespace loadfuse {

// MAPE = (100/N') sum |est - truth| / |truth| over the N' points whose
// truth clears the epsilon guard; excluded points are counted, never
// silently dropped.
struct MapeResult {
  double percent = 0.0;
  int included = 0;
  int excluded = 0;
};

inline MapeResult mape(const Eigen::VectorXd& estimates,
                       const Eigen::VectorXd& truth, double epsilon = 1e-3) {
  if (estimates.size() != truth.size())
    throw LengthMismatch("mape: " + std::to_string(estimates.size()) + " vs " +
                         std::to_string(truth.size()));
  if (epsilon < 0.0) throw ConfigError("mape epsilon must be >= 0");
  MapeResult out;
  double acc = 0.0;
  for (int i = 0; i < truth.size(); ++i) {
    if (std::fabs(truth[i]) < epsilon) {
      ++out.excluded;
      continue;
    }
    acc += std::fabs(estimates[i] - truth[i]) / std::fabs(truth[i]);
    ++out.included;
  }
  if (out.included == 0)
    throw EmptyAfterExclusion("every point fell under the mape epsilon");
  out.percent = 100.0 * acc / out.included;
  return out;
}

inline double rmse(const Eigen::VectorXd& estimates,
                   const Eigen::VectorXd& truth) {
  if (estimates.size() != truth.size())
    throw LengthMismatch("rmse: " + std::to_string(estimates.size()) + " vs " +
                         std::to_string(truth.size()));
  if (estimates.size() == 0) throw EmptyInput("rmse of empty vectors");
  return std::sqrt((estimates - truth).squaredNorm() / estimates.size());
}

struct MetricReport {
  std::string method;
  double rmse_kw = 0.0;
  double mape_percent = 0.0;
  int mape_excluded = 0;
  int points = 0;

  struct WindowRow {
    std::int64_t window = 0;
    double rmse_kw = 0.0;
    double mape_percent = 0.0;  // NaN when every point excluded
    double energy_gap_kwh = 0.0;
  };
  std::vector<WindowRow> windows;
};

}  // namespace loadfuse
