#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "loadfuse/experiment.hpp"
#include "loadfuse/synthetic.hpp"

using namespace loadfuse;

namespace {

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.layers = 1;
  cfg.inducing = 8;
  cfg.iterations = 60;
  cfg.minibatch = 64;
  cfg.mc_samples = 1;
  cfg.learning_rate = 0.05;
  cfg.predict_samples = 50;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("fractional split covers the range in order") {
  SplitConfig cfg;
  auto s = make_split(0, 100, cfg);
  REQUIRE(s.train_end == 60);
  REQUIRE(s.val_end == 75);
  REQUIRE(s.end == 100);
  REQUIRE(s.test_count() == 25);
}

TEST_CASE("explicit window split overrides fractions") {
  SplitConfig cfg;
  cfg.train_windows = 18;
  cfg.val_windows = 4;
  auto s = make_split(0, 30, cfg);
  REQUIRE(s.train_end == 18);
  REQUIRE(s.val_end == 22);
  REQUIRE(s.end == 30);
  cfg.train_windows = 40;
  REQUIRE_THROWS_AS(make_split(0, 30, cfg), ConfigError);
}

TEST_CASE("average on constant synthetic load scores zero") {
  SyntheticSpec spec;
  spec.n_nodes = 2;
  spec.n_days = 5;
  spec.daily_profile.assign(288, 1.0);
  spec.factor_amplitude_kw = 0.0;
  spec.noise_scale_kw = 0.0;
  spec.daily_amplitude_kw = 3.0;
  auto gen = generate_synthetic(spec, 3);

  ExperimentConfig cfg;
  cfg.target = "node01";
  cfg.methods = {Method::Average};
  auto res = run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg);
  REQUIRE(res.reports.size() == 1);
  REQUIRE(res.reports[0].rmse_kw < 1e-9);
  REQUIRE(res.reports[0].mape_percent < 1e-9);
  for (const auto& w : res.reports[0].windows)
    REQUIRE(std::fabs(w.energy_gap_kwh) < 1e-9);
}

TEST_CASE("a reachable withheld series trips the leak guard") {
  SyntheticSpec spec;
  spec.n_nodes = 2;
  spec.n_days = 3;
  auto gen = generate_synthetic(spec, 4);
  // smuggle the target's fast series back in under another key
  LoadSeries evil = gen.ground_truth.at("node01");
  gen.dataset.fast["evil"] = evil;  // node_id still "node01"

  ExperimentConfig cfg;
  cfg.target = "node01";
  cfg.methods = {Method::Average};
  REQUIRE_THROWS_AS(
      run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg),
      LeakageDetected);
}

TEST_CASE("reference comparison numbers reproduce the headline reductions") {
  std::vector<MetricReport> reports(4);
  reports[0].method = "Average";
  reports[0].rmse_kw = 2.7253;
  reports[0].mape_percent = 5.3296;
  reports[1].method = "PB";
  reports[1].rmse_kw = 2.0715;
  reports[1].mape_percent = 6.7099;
  reports[2].method = "CF";
  reports[2].rmse_kw = 2.0146;
  reports[2].mape_percent = 4.9073;
  reports[3].method = "CF-DGP";
  reports[3].rmse_kw = 1.7883;
  reports[3].mape_percent = 4.6708;

  auto red = headline_reductions(reports);
  REQUIRE_THAT(red.max_rmse_reduction_pct,
               Catch::Matchers::WithinAbs(34.38, 0.01));
  REQUIRE_THAT(red.max_mape_reduction_pct,
               Catch::Matchers::WithinAbs(30.39, 0.01));
}

TEST_CASE("full experiment produces aligned series and reports") {
  SyntheticSpec spec;
  spec.n_nodes = 4;
  spec.n_days = 6;
  spec.noise_scale_kw = 0.25;
  spec.gross_error_rate = 0.01;
  auto gen = generate_synthetic(spec, 11);

  ExperimentConfig cfg;
  cfg.target = "node02";
  cfg.train = tiny_train();
  cfg.correlation.min_support = 12;
  auto res = run_experiment(gen.dataset, gen.ground_truth.at("node02"), cfg);

  REQUIRE(res.reports.size() == 4);
  const std::int64_t n_test = res.split.test_count() * gen.dataset.T;
  REQUIRE(res.truth_kw.size() == n_test);
  for (const auto& ps : res.pseudo) {
    REQUIRE(static_cast<std::int64_t>(ps.mean_kw.size()) == n_test);
    REQUIRE(ps.start_fast_index == res.test_start_fast);
  }
  for (const auto& rep : res.reports) {
    REQUIRE(std::isfinite(rep.rmse_kw));
    REQUIRE(std::isfinite(rep.mape_percent));
    REQUIRE(rep.windows.size() == static_cast<std::size_t>(res.split.test_count()));
  }
  // the Average rows integrate back to the realized readings
  for (const auto& w : res.reports[0].windows)
    REQUIRE(std::fabs(w.energy_gap_kwh) < 1e-9);
  // the CF-DGP series carries variances
  REQUIRE(res.pseudo[3].has_variance);
  for (double v : res.pseudo[3].var_kw2) REQUIRE(v >= 0.0);
}

TEST_CASE("experiments are reproducible") {
  SyntheticSpec spec;
  spec.n_nodes = 3;
  spec.n_days = 5;
  auto gen = generate_synthetic(spec, 21);

  ExperimentConfig cfg;
  cfg.target = "node01";
  cfg.methods = {Method::PB, Method::CFDGP};
  cfg.train = tiny_train();
  cfg.correlation.min_support = 12;
  auto r1 = run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg);
  auto r2 = run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg);
  for (std::size_t i = 0; i < r1.reports.size(); ++i) {
    REQUIRE(r1.reports[i].rmse_kw == r2.reports[i].rmse_kw);
    REQUIRE(r1.reports[i].mape_percent == r2.reports[i].mape_percent);
  }
  REQUIRE(r1.pseudo[0].mean_kw == r2.pseudo[0].mean_kw);
  REQUIRE(r1.pseudo[1].mean_kw == r2.pseudo[1].mean_kw);
}

TEST_CASE("multithreaded experiment matches single-threaded") {
  SyntheticSpec spec;
  spec.n_nodes = 4;
  spec.n_days = 5;
  auto gen = generate_synthetic(spec, 23);

  ExperimentConfig cfg;
  cfg.target = "node03";
  cfg.methods = {Method::CFDGP};
  cfg.train = tiny_train();
  cfg.correlation.min_support = 12;
  cfg.threads = 1;
  auto r1 = run_experiment(gen.dataset, gen.ground_truth.at("node03"), cfg);
  cfg.threads = 4;
  auto r2 = run_experiment(gen.dataset, gen.ground_truth.at("node03"), cfg);
  REQUIRE(r1.pseudo[0].mean_kw == r2.pseudo[0].mean_kw);
  REQUIRE(r1.pseudo[0].var_kw2 == r2.pseudo[0].var_kw2);
}

TEST_CASE("regression benchmark reports finite scores") {
  SyntheticSpec spec;
  spec.n_nodes = 1;
  spec.n_days = 6;
  auto gen = generate_synthetic(spec, 31);
  SplitConfig scfg;
  scfg.train_windows = 96;  // 4 days
  scfg.val_windows = 24;    // 1 day
  auto split = make_split(0, 144, scfg);
  auto score = regression_benchmark(gen.dataset, gen.ground_truth.at("node01"),
                                    "node01", split, tiny_train());
  REQUIRE(std::isfinite(score.val_mape));
  REQUIRE(std::isfinite(score.test_mape));
  REQUIRE(score.val_mape > 0.0);
  REQUIRE(score.test_rmse > 0.0);
}

TEST_CASE("expanding correlation reacts to regime changes, frozen does not") {
  // neighbor tracks the target in the first half and mirrors it afterwards
  TwoScaleDataset ds;
  ds.T = 2;
  ds.delta_t_hours = 0.5;
  const int n_w = 40;
  std::vector<double> wa(n_w), fb(2 * n_w);
  for (int k = 0; k < n_w; ++k) {
    const double v = 2.0 + std::sin(0.5 * k);
    wa[k] = v;
    const double nb = k < n_w / 2 ? v : 4.0 - v;
    fb[2 * k] = nb;
    fb[2 * k + 1] = nb;
  }
  ds.slow["a"] = LoadSeries("a", TimeScale::Slow, 0, wa);
  ds.fast["b"] = LoadSeries("b", TimeScale::Fast, 0, fb);
  ds.slow["b"] = aggregate_fast_to_slow(ds.fast["b"], 2, 0.5);

  CorrelationConfig frozen_cfg;
  frozen_cfg.min_support = 8;
  frozen_cfg.end_window = n_w / 2;
  auto frozen = correlation_matrix(ds, frozen_cfg);
  CorrelationConfig expanded_cfg;
  expanded_cfg.min_support = 8;
  expanded_cfg.end_window = n_w;
  auto expanded = correlation_matrix(ds, expanded_cfg);
  const int ia = frozen.index_of("a"), ib = frozen.index_of("b");
  REQUIRE(frozen.r(ia, ib) > 0.99);
  REQUIRE(expanded.r(ia, ib) < frozen.r(ia, ib) - 0.1);
}

TEST_CASE("prediction-based beats average on rmse but not mape on a peaky profile") {
  // triangle mountain with deep valleys: interpolation tracks the ramps
  // (rmse) while valley overshoot inflates relative error (mape)
  std::vector<double> profile(288);
  double mean = 0;
  for (int i = 0; i < 288; ++i) {
    const double h = 24.0 * (i + 0.5) / 288.0;
    double d = std::fabs(h - 19.0);
    d = std::min(d, 24.0 - d);
    profile[i] = 0.04 + std::max(0.0, 1.5 * (1.0 - d / 6.0));
    mean += profile[i];
  }
  mean /= 288;
  for (auto& v : profile) v /= mean;

  int inversions = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.n_nodes = 2;
    spec.n_days = 30;
    spec.n_factors = 1;
    spec.daily_amplitude_kw = 6.0;
    spec.daily_profile = profile;
    spec.factor_amplitude_kw = 0.15;
    spec.noise_scale_kw = 0.15;
    spec.gross_error_rate = 0.0;
    auto gen = generate_synthetic(spec, seed);

    ExperimentConfig cfg;
    cfg.target = "node01";
    cfg.methods = {Method::Average, Method::PB};
    cfg.train.layers = 1;
    cfg.train.inducing = 48;
    cfg.train.iterations = 700;
    cfg.train.minibatch = 128;
    cfg.train.mc_samples = 1;
    cfg.train.learning_rate = 0.015;
    cfg.train.init_lengthscale = 0.4;
    cfg.train.predict_samples = 100;
    cfg.train.seed = seed;
    cfg.threads = 4;
    auto res = run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg);
    if (res.reports[1].rmse_kw < res.reports[0].rmse_kw &&
        res.reports[1].mape_percent > res.reports[0].mape_percent)
      ++inversions;
  }
  REQUIRE(inversions == 3);
}

TEST_CASE("online correlation recomputation runs through the harness") {
  SyntheticSpec spec;
  spec.n_nodes = 3;
  spec.n_days = 5;
  auto gen = generate_synthetic(spec, 37);
  ExperimentConfig cfg;
  cfg.target = "node01";
  cfg.methods = {Method::CF};
  cfg.train = tiny_train();
  cfg.correlation.min_support = 12;
  cfg.recompute_correlation_online = true;
  auto res = run_experiment(gen.dataset, gen.ground_truth.at("node01"), cfg);
  REQUIRE(std::isfinite(res.reports[0].rmse_kw));
  REQUIRE(res.pseudo[0].mean_kw.size() ==
          static_cast<std::size_t>(res.split.test_count() * gen.dataset.T));
}
