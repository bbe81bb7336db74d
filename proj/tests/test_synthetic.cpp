#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "loadfuse/synthetic.hpp"

using namespace loadfuse;

namespace {

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  return num / (std::sqrt(dx) * std::sqrt(dy));
}

}  // namespace

TEST_CASE("identical latent weights and zero noise give r = 1") {
  SyntheticSpec spec;
  spec.n_nodes = 2;
  spec.n_days = 3;
  spec.n_factors = 2;
  spec.weights = {{0.8, 0.4}, {0.8, 0.4}};
  spec.noise_scale_kw = 0.0;
  auto gen = generate_synthetic(spec, 5);
  const auto& wa = gen.dataset.slow.at("node01").values;
  const auto& wb = gen.dataset.slow.at("node02").values;
  REQUIRE_THAT(pearson_oracle(wa, wb), Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("zero gross-error rate exposes ground truth unchanged") {
  SyntheticSpec spec;
  spec.n_nodes = 4;
  spec.n_days = 2;
  spec.gross_error_rate = 0.0;
  auto gen = generate_synthetic(spec, 11);
  REQUIRE(gen.corrupted.empty());
  for (const auto& [node, measured] : gen.dataset.fast) {
    const auto& truth = gen.ground_truth.at(node);
    REQUIRE(measured.values == truth.values);
  }
}

TEST_CASE("corrupted-point count lands in the binomial 99% interval") {
  SyntheticSpec spec;
  spec.n_nodes = 10;
  spec.n_days = 7;
  spec.gross_error_rate = 0.01;
  spec.gross_error_sigma = 5.0;
  auto gen = generate_synthetic(spec, 123);
  const double n = 10.0 * 7.0 * 288.0;
  const double mean = n * 0.01;
  const double sd = std::sqrt(n * 0.01 * 0.99);
  const double lo = mean - 2.576 * sd, hi = mean + 2.576 * sd;
  const double count = static_cast<double>(gen.corrupted.size());
  REQUIRE(count >= lo);
  REQUIRE(count <= hi);
  // spikes really are 5 sigma
  for (const auto& c : gen.corrupted)
    REQUIRE_THAT(std::fabs(c.spike_kw),
                 Catch::Matchers::WithinAbs(5.0 * spec.noise_scale_kw, 1e-12));
}

TEST_CASE("slow output equals re-aggregated ground truth bit-for-bit") {
  SyntheticSpec spec;
  spec.n_nodes = 3;
  spec.n_days = 2;
  spec.gross_error_rate = 0.02;
  auto gen = generate_synthetic(spec, 321);
  for (const auto& [node, truth] : gen.ground_truth) {
    auto relagg = aggregate_fast_to_slow(truth, spec.T, spec.delta_t_hours);
    const auto& slow = gen.dataset.slow.at(node);
    REQUIRE(relagg.values == slow.values);
  }
}

TEST_CASE("generation is deterministic given the seed") {
  SyntheticSpec spec;
  spec.n_nodes = 3;
  spec.n_days = 2;
  spec.gross_error_rate = 0.05;
  auto a = generate_synthetic(spec, 77);
  auto b = generate_synthetic(spec, 77);
  REQUIRE(dataset_equal(a.dataset, b.dataset));
  REQUIRE(a.corrupted.size() == b.corrupted.size());
  auto c = generate_synthetic(spec, 78);
  REQUIRE_FALSE(dataset_equal(a.dataset, c.dataset));
}

TEST_CASE("invalid specs are rejected") {
  SyntheticSpec spec;
  spec.n_nodes = 0;
  REQUIRE_THROWS_AS(generate_synthetic(spec, 1), InvalidSpec);
  spec.n_nodes = 2;
  spec.weights = {{1.5}, {0.2}};
  spec.n_factors = 1;
  REQUIRE_THROWS_AS(generate_synthetic(spec, 1), InvalidSpec);
}
