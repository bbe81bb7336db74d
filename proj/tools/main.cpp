// loadfuse: infer fast-scale nodal power pseudo-measurements from slow
// smart-meter readings and evaluate the estimators against ground truth.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "loadfuse/config.hpp"
#include "loadfuse/log.hpp"
#include "loadfuse/model_store.hpp"
#include "loadfuse/plot.hpp"

namespace fs = std::filesystem;
using namespace loadfuse;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed = -1;  // -1: keep config value
  int threads = 0;         // 0: keep config value
  bool svg = false;
};

RunConfig load_effective_config(const CommonArgs& args) {
  nlohmann::json j = nlohmann::json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config '" + args.config_path + "'");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config parse: " + std::string(e.what()));
    }
  }
  RunConfig cfg = parse_run_config(j);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads > 0) cfg.threads = args.threads;
  return cfg;
}

void write_text_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
}

// Effective config lands in every output directory for provenance.
void persist_config(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "config.json");
  if (!out) throw IoError("cannot write config.json");
  out << run_config_to_json(cfg).dump(2) << '\n';
}

std::vector<std::string> resolve_targets(const RunConfig& cfg) {
  if (cfg.targets.empty())
    throw ConfigError("config must name at least one target node");
  return cfg.targets;
}

int cmd_ingest(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  if (!cfg.csv) throw ConfigError("ingest needs dataset.csv in the config");
  IngestReport report;
  TwoScaleDataset ds = load_dataset(cfg, nullptr, &report);

  std::cout << "rows: " << report.rows_total << " total, "
            << report.rows_accepted << " accepted, " << report.rejected.size()
            << " rejected\n";
  std::cout << "nodes: " << report.fast_nodes << " fast, "
            << report.slow_nodes << " slow\n";
  std::cout << "gaps: " << report.total_gaps() << " missing entries\n";
  for (const auto& [node, g] : report.gaps_fast)
    if (g > 0) std::cout << "  fast " << node << ": " << g << '\n';
  for (const auto& [node, g] : report.gaps_slow)
    if (g > 0) std::cout << "  slow " << node << ": " << g << '\n';
  for (const auto& r : report.rejected)
    std::cout << "  rejected row " << r.row_number << ": " << r.reason << '\n';
  for (const auto& [id, s] : ds.fast)
    std::cout << "fast " << id << ": [" << format_iso8601(ds.fast_index_time(s.start_index))
              << ", " << format_iso8601(ds.fast_index_time(s.end_index())) << ")\n";
  for (const auto& [id, s] : ds.slow)
    std::cout << "slow " << id << ": [" << format_iso8601(ds.slow_index_time(s.start_index))
              << ", " << format_iso8601(ds.slow_index_time(s.end_index())) << ")\n";

  if (!args.out_dir.empty()) {
    persist_config(cfg, args.out_dir);
    nlohmann::json j;
    j["rows_total"] = report.rows_total;
    j["rows_accepted"] = report.rows_accepted;
    j["rejected"] = nlohmann::json::array();
    for (const auto& r : report.rejected)
      j["rejected"].push_back({{"row", r.row_number}, {"reason", r.reason}});
    j["gaps_fast"] = report.gaps_fast;
    j["gaps_slow"] = report.gaps_slow;
    write_text_file(fs::path(args.out_dir) / "ingest_report.json",
                    j.dump(2) + "\n");
  }
  return 0;
}

int cmd_gen_synthetic(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  if (!cfg.synthetic)
    throw ConfigError("gen-synthetic needs a synthetic spec in the config");
  auto gen = generate_synthetic(*cfg.synthetic, cfg.seed);

  const fs::path out(args.out_dir);
  persist_config(cfg, out);
  {
    std::ofstream o(out / "dataset.csv");
    emit_csv(o, gen.dataset);
  }
  {
    TwoScaleDataset truth;
    truth.T = gen.dataset.T;
    truth.delta_t_hours = gen.dataset.delta_t_hours;
    truth.epoch_s = gen.dataset.epoch_s;
    truth.fast = gen.ground_truth;
    std::ofstream o(out / "ground_truth.csv");
    emit_csv(o, truth);
  }
  {
    std::ofstream o(out / "corrupted.csv");
    o << "node_id,timestamp,spike_kw\n";
    char buf[40];
    for (const auto& c : gen.corrupted) {
      std::snprintf(buf, sizeof(buf), "%.17g", c.spike_kw);
      o << c.node_id << ','
        << format_iso8601(gen.dataset.fast_index_time(c.fast_index)) << ','
        << buf << '\n';
    }
  }
  std::cout << "generated " << gen.dataset.slow.size() << " nodes x "
            << cfg.synthetic->n_days << " days, " << gen.corrupted.size()
            << " gross errors, " << gen.clamped_points
            << " clamped points -> " << (out / "dataset.csv").string() << '\n';
  return 0;
}

int cmd_correlate(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  TwoScaleDataset ds = load_dataset(cfg);
  auto corr = correlation_matrix(ds, cfg.correlation);

  const fs::path out(args.out_dir);
  persist_config(cfg, out);
  {
    std::ofstream o(out / "correlation.csv");
    corr.to_csv(o);
  }
  {
    std::ofstream o(out / "correlation_grid.csv");
    corr.to_grid_csv(o);
  }
  int unusable = 0;
  for (int i = 0; i < corr.r.rows(); ++i)
    for (int j = i + 1; j < corr.r.cols(); ++j)
      if (!corr.pair_usable(i, j)) ++unusable;
  std::cout << corr.nodes.size() << " nodes, " << unusable
            << " unusable pairs -> " << (out / "correlation.csv").string()
            << '\n';
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  SyntheticResult synth;
  TwoScaleDataset ds = load_dataset(cfg, &synth);
  const fs::path out(args.out_dir);
  persist_config(cfg, out);

  for (const auto& target : resolve_targets(cfg)) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed ^ fnv1a(target.data(), target.size());
    TrainingTrace trace;
    TrainedNodeModel model;
    if (cfg.train_scale == TimeScale::Fast) {
      const auto& s = ds.fast.at(target);
      model = train_fast_node_model(ds, target, s.start_index, s.end_index(),
                                    tc, &trace);
    } else {
      const auto& s = ds.slow.at(target);
      model = train_slow_node_model(ds, target, s.start_index, s.end_index(),
                                    tc, &trace);
    }
    const std::string tag =
        target + (cfg.train_scale == TimeScale::Fast ? "_fast" : "_slow");
    save_model((out / "models" / tag).string(), model);
    {
      std::ofstream o(out / "models" / tag / "trace.csv");
      trace.to_csv(o);
    }
    std::cout << "trained " << tag << ": elbo " << trace.rows.front().elbo
              << " -> " << trace.rows.back().elbo << " over "
              << trace.rows.size() << " iterations\n";
  }
  return 0;
}

int cmd_synthesize(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  TwoScaleDataset ds = load_dataset(cfg);
  const fs::path out(args.out_dir);
  persist_config(cfg, out);

  for (const auto& target : resolve_targets(cfg)) {
    auto synth = synthesize_methods(ds, cfg.experiment_for(target));
    fs::create_directories(out / target);
    std::ofstream o(out / target / "pseudo.csv");
    emit_pseudo_csv(o, ds, synth.pseudo);
    std::cout << target << ": " << synth.pseudo.size() << " methods x "
              << synth.split.test_count() << " windows -> "
              << (out / target / "pseudo.csv").string() << '\n';
  }
  return 0;
}

int cmd_evaluate(const CommonArgs& args) {
  RunConfig cfg = load_effective_config(args);
  SyntheticResult synth;
  TwoScaleDataset ds = load_dataset(cfg, &synth);
  const fs::path out(args.out_dir);
  persist_config(cfg, out);

  for (const auto& target : resolve_targets(cfg)) {
    // ground truth: synthetic truth when available, else the node's own
    // (withheld) fast series
    LoadSeries truth;
    if (cfg.synthetic) {
      truth = synth.ground_truth.at(target);
    } else {
      auto it = ds.fast.find(target);
      if (it == ds.fast.end())
        throw MissingSlowReading(
            "evaluation needs the target's fast series as ground truth");
      truth = it->second;
    }

    auto res = run_experiment(ds, truth, cfg.experiment_for(target));
    const fs::path tdir = out / target;
    fs::create_directories(tdir);
    {
      std::ofstream o(tdir / "comparison.csv");
      comparison_to_csv(o, res.reports);
    }
    {
      std::ofstream o(tdir / "comparison.txt");
      comparison_to_text(o, res.reports);
    }
    {
      std::ofstream o(tdir / "windows.csv");
      window_breakdown_to_csv(o, ds, res.reports);
    }
    {
      std::ofstream o(tdir / "pseudo.csv");
      emit_pseudo_csv(o, ds, res.pseudo);
    }
    bool has_ref = false;
    for (const auto& r : res.reports)
      if (r.method == cfg.report_reference) has_ref = true;
    if (has_ref && res.reports.size() > 1) {
      auto red = headline_reductions(res.reports, cfg.report_reference);
      std::ofstream o(tdir / "reductions.csv");
      reductions_to_csv(o, red);
    }
    {
      // aligned plot data: truth plus per-method means over the test range
      std::vector<std::string> ts;
      for (std::int64_t i = 0; i < res.truth_kw.size(); ++i)
        ts.push_back(format_iso8601(
            ds.fast_index_time(res.test_start_fast + i)));
      std::vector<std::pair<std::string, std::vector<double>>> series;
      series.emplace_back("truth",
                          std::vector<double>(res.truth_kw.data(),
                                              res.truth_kw.data() +
                                                  res.truth_kw.size()));
      for (const auto& ps : res.pseudo)
        series.emplace_back(method_name(ps.method), ps.mean_kw);
      std::ofstream o(tdir / "series.csv");
      write_series_csv(o, ts, series);
      if (args.svg) {
        std::ofstream svg(tdir / "series.svg");
        write_line_chart_svg(svg, "pseudo-measurements vs truth: " + target,
                             series);
      }
    }
    std::cout << "== " << target << " ==\n";
    comparison_to_text(std::cout, res.reports);
  }
  return 0;
}

int cmd_report(const CommonArgs& args, const std::string& table_flag) {
  RunConfig cfg = load_effective_config(args);
  const std::string table_path =
      !table_flag.empty() ? table_flag : cfg.report_table;
  if (table_path.empty())
    throw ConfigError("report needs a comparison table (--table or report.table)");

  std::ifstream in(table_path);
  if (!in) throw IoError("cannot open '" + table_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty table");
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "method")
    throw ParseError("expected header method,rmse_kw,mape_percent,...");

  std::vector<MetricReport> reports;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() < 3)
      throw ParseError("row " + std::to_string(row) + ": expected >= 3 fields");
    MetricReport r;
    r.method = f[0];
    r.rmse_kw = detail::parse_double_strict(f[1]);
    r.mape_percent = detail::parse_double_strict(f[2]);
    reports.push_back(r);
  }
  auto red = headline_reductions(reports, cfg.report_reference);

  const fs::path out(args.out_dir);
  persist_config(cfg, out);
  {
    std::ofstream o(out / "reductions.csv");
    reductions_to_csv(o, red);
  }
  char buf[160];
  for (const auto& r : red.rows) {
    std::snprintf(buf, sizeof(buf),
                  "%s vs %s: RMSE reduced %.2f%%, MAPE reduced %.2f%%\n",
                  red.reference.c_str(), r.baseline.c_str(),
                  r.rmse_reduction_pct, r.mape_reduction_pct);
    std::cout << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "%s: RMSE reduced by at most %.2f%%, MAPE by at most %.2f%%\n",
                red.reference.c_str(), red.max_rmse_reduction_pct,
                red.max_mape_reduction_pct);
  std::cout << buf;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  log::sink() = [](const std::string& msg) {
    std::cerr << "[loadfuse] " << msg << '\n';
  };

  CLI::App app{
      "loadfuse: fast-scale pseudo-measurements from smart-meter data"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string report_table;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--threads", args.threads, "worker pool size");
    cmd->add_flag("--svg", args.svg, "also emit SVG charts");
  };

  auto* ingest = app.add_subcommand("ingest", "validate and summarize a CSV dataset");
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic benchmark dataset");
  auto* correlate = app.add_subcommand("correlate", "emit the Pearson correlation matrix");
  auto* train = app.add_subcommand("train", "train and persist per-node models");
  auto* synthesize = app.add_subcommand("synthesize", "emit pseudo-measurement series per method");
  auto* evaluate = app.add_subcommand("evaluate", "run the method comparison against ground truth");
  auto* report = app.add_subcommand("report", "compute headline reductions from a comparison table");
  for (auto* cmd : {ingest, gen, correlate, train, synthesize, evaluate, report})
    add_common(cmd);
  report->add_option("--table", report_table, "comparison CSV (method,rmse_kw,mape_percent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(args);
    if (app.got_subcommand(gen)) return cmd_gen_synthetic(args);
    if (app.got_subcommand(correlate)) return cmd_correlate(args);
    if (app.got_subcommand(train)) return cmd_train(args);
    if (app.got_subcommand(synthesize)) return cmd_synthesize(args);
    if (app.got_subcommand(evaluate)) return cmd_evaluate(args);
    if (app.got_subcommand(report)) return cmd_report(args, report_table);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
