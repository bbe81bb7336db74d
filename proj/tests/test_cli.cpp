#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loadfuse/config.hpp"

using namespace loadfuse;
namespace fs = std::filesystem;

namespace {

const char* kCli = LOADFUSE_CLI_PATH;
const fs::path kRoot = "/tmp/loadfuse_cli_test";

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const fs::path log = kRoot / "last_output.txt";
  fs::create_directories(kRoot);
  const std::string cmd =
      std::string(kCli) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(status), ss.str()};
}

void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tiny_config(std::uint64_t seed, double lr = 0.05,
                        int iterations = 40) {
  std::ostringstream ss;
  ss << R"({
  "synthetic": {"nodes": 3, "days": 4, "gross_error_rate": 0.01},
  "targets": ["node01"],
  "train": {"layers": 1, "inducing": 8, "iterations": )"
     << iterations << R"(, "minibatch": 64, "mc_samples": 1,
            "learning_rate": )"
     << lr << R"(, "predict_samples": 30},
  "correlation": {"min_support": 12},
  "seed": )"
     << seed << "\n}\n";
  return ss.str();
}

// strip the wall_ms column (timestamps are excluded from determinism)
std::string trace_without_wall(const fs::path& p) {
  std::ifstream in(p);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto last_comma = line.rfind(',');
    out += line.substr(0, last_comma) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("ingest summarizes a valid file and exits zero") {
  const fs::path dir = kRoot / "ingest_ok";
  fs::remove_all(dir);
  write_file(dir / "data.csv",
             "timestamp,node_id,value,scale\n"
             "2020-01-01T00:00:00Z,a,1.5,fast\n"
             "2020-01-01T00:05:00Z,a,2.5,fast\n");
  write_file(dir / "cfg.json",
             "{\"dataset\": {\"csv\": \"" + (dir / "data.csv").string() +
                 "\"}}");
  auto r = run_cli("ingest --config " + (dir / "cfg.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("rows: 2 total, 2 accepted") != std::string::npos);
  REQUIRE(fs::exists(dir / "out" / "ingest_report.json"));
}

TEST_CASE("malformed row gives data exit code and row diagnostics") {
  const fs::path dir = kRoot / "ingest_bad";
  fs::remove_all(dir);
  write_file(dir / "data.csv",
             "timestamp,node_id,value,scale\n"
             "2020-01-01T00:00:00Z,a,1.5,fast\n"
             "2020-01-01T00:05:00Z,a,nope,fast\n");
  write_file(dir / "cfg.json",
             "{\"dataset\": {\"csv\": \"" + (dir / "data.csv").string() +
                 "\"}}");
  auto r = run_cli("ingest --config " + (dir / "cfg.json").string());
  REQUIRE(r.exit_code == 3);
  REQUIRE(r.output.find("row 3") != std::string::npos);
}

TEST_CASE("gap fixture shows up in the ingest summary") {
  const fs::path dir = kRoot / "ingest_gap";
  fs::remove_all(dir);
  std::ostringstream csv;
  csv << "timestamp,node_id,value,scale\n";
  for (int t = 0; t < 36; ++t) {
    if (t >= 12 && t < 24) continue;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "2020-01-01T%02d:%02d:00Z,a,1.0,fast\n",
                  (t * 5) / 60, (t * 5) % 60);
    csv << buf;
  }
  write_file(dir / "data.csv", csv.str());
  write_file(dir / "cfg.json",
             "{\"dataset\": {\"csv\": \"" + (dir / "data.csv").string() +
                 "\"}}");
  auto r = run_cli("ingest --config " + (dir / "cfg.json").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("gaps: 12") != std::string::npos);
}

TEST_CASE("unknown config keys give the config exit code") {
  const fs::path dir = kRoot / "bad_key";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", "{\"synthetic\": {\"nodes\": 2}, \"zzz\": 1}");
  auto r = run_cli("gen-synthetic --config " + (dir / "cfg.json").string());
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.output.find("unknown key 'zzz'") != std::string::npos);
}

TEST_CASE("generation is byte-deterministic given config and seed") {
  const fs::path dir = kRoot / "gen_det";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(42));
  auto r1 = run_cli("gen-synthetic --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "a").string());
  auto r2 = run_cli("gen-synthetic --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "b").string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(slurp(dir / "a" / "dataset.csv") == slurp(dir / "b" / "dataset.csv"));
  REQUIRE(slurp(dir / "a" / "ground_truth.csv") ==
          slurp(dir / "b" / "ground_truth.csv"));
  // seed flag overrides the config
  auto r3 = run_cli("gen-synthetic --config " + (dir / "cfg.json").string() +
                    " --seed 43 --out " + (dir / "c").string());
  REQUIRE(r3.exit_code == 0);
  REQUIRE(slurp(dir / "a" / "dataset.csv") != slurp(dir / "c" / "dataset.csv"));
}

TEST_CASE("training twice yields byte-identical models and traces") {
  const fs::path dir = kRoot / "train_det";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(7));
  auto r1 = run_cli("train --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "a").string());
  auto r2 = run_cli("train --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "b").string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  const std::string model = "models/node01_fast";
  REQUIRE(slurp(dir / "a" / model / "params.bin") ==
          slurp(dir / "b" / model / "params.bin"));
  REQUIRE(slurp(dir / "a" / model / "manifest.json") ==
          slurp(dir / "b" / model / "manifest.json"));
  REQUIRE(trace_without_wall(dir / "a" / model / "trace.csv") ==
          trace_without_wall(dir / "b" / model / "trace.csv"));
}

TEST_CASE("zero learning rate leaves persisted parameters unchanged") {
  const fs::path dir = kRoot / "train_lr0";
  fs::remove_all(dir);
  write_file(dir / "short.json", tiny_config(7, 0.0, 5));
  write_file(dir / "long.json", tiny_config(7, 0.0, 25));
  auto r1 = run_cli("train --config " + (dir / "short.json").string() +
                    " --out " + (dir / "a").string());
  auto r2 = run_cli("train --config " + (dir / "long.json").string() +
                    " --out " + (dir / "b").string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(slurp(dir / "a" / "models/node01_fast/params.bin") ==
          slurp(dir / "b" / "models/node01_fast/params.bin"));
}

TEST_CASE("training trace climbs on the fixture") {
  const fs::path dir = kRoot / "train_rise";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(7, 0.05, 120));
  auto r = run_cli("train --config " + (dir / "cfg.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  std::ifstream trace(dir / "out/models/node01_fast/trace.csv");
  std::string line;
  std::getline(trace, line);  // header
  double first = 0, last = 0;
  bool got_first = false;
  while (std::getline(trace, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double elbo = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    if (!got_first) {
      first = elbo;
      got_first = true;
    }
    last = elbo;
  }
  REQUIRE(last > first);
}

TEST_CASE("synthesize reruns identically and matches the library path") {
  const fs::path dir = kRoot / "synth_eq";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(11));
  auto r1 = run_cli("synthesize --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "a").string());
  auto r2 = run_cli("synthesize --config " + (dir / "cfg.json").string() +
                    " --out " + (dir / "b").string());
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  const std::string cli_bytes = slurp(dir / "a/node01/pseudo.csv");
  REQUIRE(cli_bytes == slurp(dir / "b/node01/pseudo.csv"));

  // direct library call with the same config
  nlohmann::json j;
  std::ifstream in(dir / "cfg.json");
  in >> j;
  RunConfig cfg = parse_run_config(j);
  TwoScaleDataset ds = load_dataset(cfg);
  auto synth = synthesize_methods(ds, cfg.experiment_for("node01"));
  std::ostringstream lib;
  emit_pseudo_csv(lib, ds, synth.pseudo);
  REQUIRE(cli_bytes == lib.str());
}

TEST_CASE("evaluate emits the comparison artifacts") {
  const fs::path dir = kRoot / "eval_art";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(13));
  auto r = run_cli("evaluate --config " + (dir / "cfg.json").string() +
                   " --svg --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"comparison.csv", "comparison.txt", "windows.csv",
                        "pseudo.csv", "series.csv", "series.svg",
                        "reductions.csv"})
    REQUIRE(fs::exists(dir / "out" / "node01" / f));
  REQUIRE(fs::exists(dir / "out" / "config.json"));
  REQUIRE(r.output.find("CF-DGP") != std::string::npos);
}

TEST_CASE("report computes headline reductions from a comparison table") {
  const fs::path dir = kRoot / "report";
  fs::remove_all(dir);
  write_file(dir / "table.csv",
             "method,rmse_kw,mape_percent\n"
             "Average,2.7253,5.3296\n"
             "PB,2.0715,6.7099\n"
             "CF,2.0146,4.9073\n"
             "CF-DGP,1.7883,4.6708\n");
  auto r = run_cli("report --table " + (dir / "table.csv").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("RMSE reduced by at most 34.38%") != std::string::npos);
  REQUIRE(r.output.find("MAPE by at most 30.39%") != std::string::npos);
}

TEST_CASE("correlate marks a constant node unusable") {
  const fs::path dir = kRoot / "corr";
  fs::remove_all(dir);
  std::ostringstream csv;
  csv << "timestamp,node_id,value,scale\n";
  for (int k = 0; k < 30; ++k) {
    char buf[96];
    const int day = k / 24, hr = k % 24;
    std::snprintf(buf, sizeof(buf),
                  "2020-01-%02dT%02d:00:00Z,a,%.3f,slow\n", day + 1, hr,
                  1.0 + std::sin(0.4 * k));
    csv << buf;
    std::snprintf(buf, sizeof(buf), "2020-01-%02dT%02d:00:00Z,b,2.0,slow\n",
                  day + 1, hr);
    csv << buf;
    std::snprintf(buf, sizeof(buf),
                  "2020-01-%02dT%02d:00:00Z,c,%.3f,slow\n", day + 1, hr,
                  2.0 + 2.0 * std::sin(0.4 * k));
    csv << buf;
  }
  write_file(dir / "data.csv", csv.str());
  write_file(dir / "cfg.json",
             "{\"dataset\": {\"csv\": \"" + (dir / "data.csv").string() +
                 "\"}, \"correlation\": {\"min_support\": 10}}");
  auto r = run_cli("correlate --config " + (dir / "cfg.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  const std::string grid = slurp(dir / "out" / "correlation_grid.csv");
  // clone pair a/c fully correlated (up to fixture rounding); constant b unusable
  REQUIRE(grid.find("a,c,0.9999") != std::string::npos);
  REQUIRE(grid.find("a,b,,30,0") != std::string::npos);

  // the emitted cell equals the pairwise coefficient computed in-process
  std::vector<double> va, vc;
  for (int k = 0; k < 30; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", 1.0 + std::sin(0.4 * k));
    va.push_back(std::stod(buf));
    std::snprintf(buf, sizeof(buf), "%.3f", 2.0 + 2.0 * std::sin(0.4 * k));
    vc.push_back(std::stod(buf));
  }
  const double expect = pearson(LoadSeries("a", TimeScale::Slow, 0, va),
                                LoadSeries("c", TimeScale::Slow, 0, vc), 10);
  const auto pos = grid.find("a,c,");
  const double emitted = std::stod(grid.substr(pos + 4));
  REQUIRE_THAT(emitted, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("evaluate works end to end on an ingested CSV dataset") {
  const fs::path dir = kRoot / "eval_csv";
  fs::remove_all(dir);
  // produce a dataset file first, then evaluate from it; the target's own
  // fast series serves as ground truth
  write_file(dir / "gen.json", tiny_config(19));
  auto g = run_cli("gen-synthetic --config " + (dir / "gen.json").string() +
                   " --out " + (dir / "gen").string());
  REQUIRE(g.exit_code == 0);
  std::string cfg = R"({
  "dataset": {"csv": ")" + (dir / "gen" / "dataset.csv").string() + R"("},
  "targets": ["node01"],
  "methods": ["average", "cf"],
  "correlation": {"min_support": 12},
  "seed": 19
})";
  write_file(dir / "eval.json", cfg);
  auto r = run_cli("evaluate --config " + (dir / "eval.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "node01" / "comparison.csv"));
  const std::string table = slurp(dir / "out" / "node01" / "comparison.csv");
  REQUIRE(table.find("Average") != std::string::npos);
  REQUIRE(table.find("CF") != std::string::npos);
}

TEST_CASE("report chains off evaluate output") {
  const fs::path dir = kRoot / "chain";
  fs::remove_all(dir);
  write_file(dir / "cfg.json", tiny_config(23));
  auto e = run_cli("evaluate --config " + (dir / "cfg.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(e.exit_code == 0);
  auto r = run_cli("report --table " +
                   (dir / "out" / "node01" / "comparison.csv").string() +
                   " --out " + (dir / "rep").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("reduced by at most") != std::string::npos);
  REQUIRE(fs::exists(dir / "rep" / "reductions.csv"));
}

TEST_CASE("evaluate handles multiple targets") {
  const fs::path dir = kRoot / "multi";
  fs::remove_all(dir);
  std::string cfg = R"({
  "synthetic": {"nodes": 3, "days": 4},
  "targets": ["node01", "node03"],
  "methods": ["average"],
  "correlation": {"min_support": 12},
  "seed": 29
})";
  write_file(dir / "cfg.json", cfg);
  auto r = run_cli("evaluate --config " + (dir / "cfg.json").string() +
                   " --out " + (dir / "out").string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "node01" / "comparison.csv"));
  REQUIRE(fs::exists(dir / "out" / "node03" / "comparison.csv"));
}
