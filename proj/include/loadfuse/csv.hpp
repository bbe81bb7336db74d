#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"
#include "loadfuse/series.hpp"
#include "loadfuse/timeutil.hpp"

namespace loadfuse {

// Schema: header `timestamp,node_id,value,scale`; ISO-8601 timestamps,
// '.' decimal separator, scale in {fast, slow}. Rows may arrive in any
// order; absent grid rows become explicit gaps.
struct CsvSchemaConfig {
  int T = 12;
  double delta_t_hours = 1.0 / 12.0;
  bool strict = true;  // strict: malformed row aborts; lenient: reject + count
  bool allow_negative_energy = false;
};

struct RejectedRow {
  std::size_t row_number = 0;  // 1-based, header = row 1
  std::string reason;
};

struct IngestReport {
  std::size_t rows_total = 0;     // data rows, header excluded
  std::size_t rows_accepted = 0;
  std::vector<RejectedRow> rejected;
  std::map<std::string, std::size_t> gaps_fast;
  std::map<std::string, std::size_t> gaps_slow;
  std::size_t fast_nodes = 0;
  std::size_t slow_nodes = 0;

  std::size_t total_gaps() const {
    std::size_t n = 0;
    for (const auto& [k, v] : gaps_fast) n += v;
    for (const auto& [k, v] : gaps_slow) n += v;
    return n;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_strict(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError("bad numeric value '" + s + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RawRow {
  std::int64_t ts = 0;
  std::string node;
  double value = 0.0;
  TimeScale scale = TimeScale::Fast;
};

}  // namespace detail

inline std::pair<TwoScaleDataset, IngestReport> ingest_csv_stream(
    std::istream& in, const CsvSchemaConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("T must be >= 1");
  if (!(cfg.delta_t_hours > 0)) throw ConfigError("delta_t must be > 0");
  const double step_real = cfg.delta_t_hours * 3600.0;
  const std::int64_t fast_step = std::llround(step_real);
  if (std::fabs(step_real - static_cast<double>(fast_step)) > 1e-6 ||
      fast_step <= 0)
    throw ConfigError("delta_t must be a whole number of seconds");
  const std::int64_t slow_step = fast_step * cfg.T;

  IngestReport report;
  std::string line;
  std::size_t row_number = 0;

  if (!std::getline(in, line)) throw ParseError("empty file");
  ++row_number;
  {
    auto hdr = detail::split_csv_line(line);
    if (hdr.size() != 4 || hdr[0] != "timestamp" || hdr[1] != "node_id" ||
        hdr[2] != "value" || hdr[3] != "scale")
      throw ParseError("row 1: expected header 'timestamp,node_id,value,scale'");
  }

  std::vector<detail::RawRow> rows;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty()) continue;
    ++report.rows_total;
    try {
      auto f = detail::split_csv_line(line);
      if (f.size() != 4)
        throw ParseError("expected 4 fields, got " + std::to_string(f.size()));
      detail::RawRow r;
      r.ts = parse_iso8601(f[0]);
      if (f[1].empty()) throw ParseError("empty node_id");
      r.node = f[1];
      r.value = detail::parse_double_strict(f[2]);
      if (f[3] == "fast")
        r.scale = TimeScale::Fast;
      else if (f[3] == "slow")
        r.scale = TimeScale::Slow;
      else
        throw ParseError("scale must be 'fast' or 'slow', got '" + f[3] + "'");
      rows.push_back(std::move(r));
    } catch (const Error& e) {
      if (cfg.strict)
        throw ParseError("row " + std::to_string(row_number) + ": " + e.what());
      report.rejected.push_back({row_number, e.what()});
    }
  }
  report.rows_accepted = rows.size();
  if (rows.empty()) throw ParseError("no data rows");

  // Index 0 anchors at the midnight before the earliest timestamp, so
  // time-of-day phase survives the round trip.
  std::int64_t min_ts = rows.front().ts;
  for (const auto& r : rows) min_ts = std::min(min_ts, r.ts);
  const std::int64_t epoch = floor_to_midnight(min_ts);

  TwoScaleDataset ds;
  ds.T = cfg.T;
  ds.delta_t_hours = cfg.delta_t_hours;
  ds.epoch_s = epoch;
  ds.allow_negative_energy = cfg.allow_negative_energy;

  // node -> (global index -> value)
  std::map<std::string, std::map<std::int64_t, double>> fast_points,
      slow_points;
  for (const auto& r : rows) {
    const std::int64_t step = r.scale == TimeScale::Fast ? fast_step : slow_step;
    const std::int64_t off = r.ts - epoch;
    if (off % step != 0)
      throw AlignmentError("timestamp " + format_iso8601(r.ts) + " for node '" +
                           r.node + "' is off the " + to_string(r.scale) +
                           " grid (step " + std::to_string(step) + " s)");
    auto& dst =
        r.scale == TimeScale::Fast ? fast_points[r.node] : slow_points[r.node];
    const std::int64_t idx = off / step;
    if (dst.count(idx))
      throw AlignmentError("duplicate reading for node '" + r.node + "' at " +
                           format_iso8601(r.ts));
    dst[idx] = r.value;
  }

  auto build = [](const std::string& node, TimeScale scale,
                  const std::map<std::int64_t, double>& pts,
                  std::size_t& gap_count) {
    LoadSeries s;
    s.node_id = node;
    s.scale = scale;
    s.start_index = pts.begin()->first;
    const std::int64_t last = pts.rbegin()->first;
    const std::size_t n = static_cast<std::size_t>(last - s.start_index + 1);
    s.values.assign(n, 0.0);
    s.present.assign(n, 0);
    for (const auto& [idx, v] : pts) {
      s.values[static_cast<std::size_t>(idx - s.start_index)] = v;
      s.present[static_cast<std::size_t>(idx - s.start_index)] = 1;
    }
    gap_count = s.missing_count();
    return s;
  };

  for (const auto& [node, pts] : fast_points) {
    std::size_t gaps = 0;
    ds.fast[node] = build(node, TimeScale::Fast, pts, gaps);
    report.gaps_fast[node] = gaps;
  }
  for (const auto& [node, pts] : slow_points) {
    std::size_t gaps = 0;
    ds.slow[node] = build(node, TimeScale::Slow, pts, gaps);
    report.gaps_slow[node] = gaps;
  }
  report.fast_nodes = ds.fast.size();
  report.slow_nodes = ds.slow.size();

  ds.validate();
  return {std::move(ds), std::move(report)};
}

inline std::pair<TwoScaleDataset, IngestReport> ingest_csv(
    const std::string& path, const CsvSchemaConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return ingest_csv_stream(in, cfg);
}

// Writes the same schema the reader accepts; gaps become absent rows.
inline void emit_csv(std::ostream& out, const TwoScaleDataset& ds) {
  out << "timestamp,node_id,value,scale\n";
  const std::int64_t fstep = ds.fast_step_s();
  for (const auto& [node, s] : ds.fast) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.present[i]) continue;
      const std::int64_t ts = ds.epoch_s + (s.start_index + (std::int64_t)i) * fstep;
      out << format_iso8601(ts) << ',' << node << ','
          << detail::format_double(s.values[i]) << ",fast\n";
    }
  }
  for (const auto& [node, s] : ds.slow) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.present[i]) continue;
      const std::int64_t ts =
          ds.epoch_s + (s.start_index + (std::int64_t)i) * fstep * ds.T;
      out << format_iso8601(ts) << ',' << node << ','
          << detail::format_double(s.values[i]) << ",slow\n";
    }
  }
}

inline void emit_csv_file(const std::string& path, const TwoScaleDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  emit_csv(out, ds);
}

}  // namespace loadfuse
