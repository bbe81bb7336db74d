#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"
#include "loadfuse/series.hpp"

namespace loadfuse {

struct CorrelationConfig {
  int min_support = 24;          // overlapping readings required per pair
  std::int64_t end_window = -1;  // use slow indices < end_window; -1 = all
};

// Pearson coefficient of two slow energy series over the indices where
// both have readings; the means are taken over the same overlap.
inline double pearson(const LoadSeries& a, const LoadSeries& b,
                      int min_support = 24,
                      std::int64_t end_window = -1) {
  const std::int64_t lo = std::max(a.start_index, b.start_index);
  std::int64_t hi = std::min(a.end_index(), b.end_index());
  if (end_window >= 0) hi = std::min(hi, end_window);

  std::vector<double> xa, xb;
  for (std::int64_t k = lo; k < hi; ++k) {
    if (a.has(k) && b.has(k)) {
      xa.push_back(a.at(k));
      xb.push_back(b.at(k));
    }
  }
  const int n = static_cast<int>(xa.size());
  if (n < min_support)
    throw InsufficientSupport("overlap " + std::to_string(n) + " < " +
                              std::to_string(min_support) + " for '" +
                              a.node_id + "'/'" + b.node_id + "'");
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += xa[i];
    mb += xb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (int i = 0; i < n; ++i) {
    num += (xa[i] - ma) * (xb[i] - mb);
    da += (xa[i] - ma) * (xa[i] - ma);
    db += (xb[i] - mb) * (xb[i] - mb);
  }
  if (da <= 0.0 || db <= 0.0)
    throw ZeroVariance("constant series over the overlap of '" + a.node_id +
                       "'/'" + b.node_id + "'");
  return num / (std::sqrt(da) * std::sqrt(db));
}

// Pairwise Pearson coefficients over slow energies, with overlap counts.
// Pairs that fail support or variance checks are kept but flagged
// unusable; estimators must skip them.
struct CorrelationMatrix {
  std::vector<std::string> nodes;
  Eigen::MatrixXd r;
  Eigen::MatrixXi support;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> usable;

  int index_of(const std::string& node) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == node) return static_cast<int>(i);
    throw ConfigError("node '" + node + "' not in correlation matrix");
  }

  bool pair_usable(int i, int j) const { return usable(i, j) != 0; }

  void to_csv(std::ostream& out) const {
    out << "node";
    for (const auto& n : nodes) out << ',' << n;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      out << nodes[i];
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (usable(i, j)) {
          std::snprintf(buf, sizeof(buf), ",%.17g", r(i, j));
          out << buf;
        } else {
          out << ",";  // unusable entry stays blank
        }
      }
      out << '\n';
    }
  }

  // Long-form grid for heatmap plotting.
  void to_grid_csv(std::ostream& out) const {
    out << "node_i,node_j,r,support,usable\n";
    char buf[40];
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        out << nodes[i] << ',' << nodes[j] << ',';
        if (usable(i, j)) {
          std::snprintf(buf, sizeof(buf), "%.17g", r(i, j));
          out << buf;
        }
        out << ',' << support(i, j) << ',' << (usable(i, j) ? 1 : 0) << '\n';
      }
  }
};

inline int overlap_count(const LoadSeries& a, const LoadSeries& b,
                         std::int64_t end_window) {
  const std::int64_t lo = std::max(a.start_index, b.start_index);
  std::int64_t hi = std::min(a.end_index(), b.end_index());
  if (end_window >= 0) hi = std::min(hi, end_window);
  int n = 0;
  for (std::int64_t k = lo; k < hi; ++k)
    if (a.has(k) && b.has(k)) ++n;
  return n;
}

inline CorrelationMatrix correlation_matrix(const TwoScaleDataset& ds,
                                            const CorrelationConfig& cfg = {}) {
  CorrelationMatrix out;
  out.nodes = ds.node_ids();
  const int n = static_cast<int>(out.nodes.size());
  out.r = Eigen::MatrixXd::Zero(n, n);
  out.support = Eigen::MatrixXi::Zero(n, n);
  out.usable.setZero(n, n);

  std::vector<LoadSeries> energies;
  energies.reserve(n);
  for (const auto& node : out.nodes) energies.push_back(ds.slow_energy_view(node));

  for (int i = 0; i < n; ++i) {
    out.r(i, i) = 1.0;
    out.support(i, i) = overlap_count(energies[i], energies[i], cfg.end_window);
    out.usable(i, i) = 1;
    for (int j = i + 1; j < n; ++j) {
      out.support(i, j) = out.support(j, i) =
          overlap_count(energies[i], energies[j], cfg.end_window);
      try {
        const double rij =
            pearson(energies[i], energies[j], cfg.min_support, cfg.end_window);
        out.r(i, j) = out.r(j, i) = rij;
        out.usable(i, j) = out.usable(j, i) = 1;
      } catch (const InsufficientSupport&) {
      } catch (const ZeroVariance&) {
      }
    }
  }
  return out;
}

}  // namespace loadfuse
