#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>

#include "loadfuse/metrics.hpp"
#include "loadfuse/rng.hpp"

using namespace loadfuse;

TEST_CASE("mape of exact estimates is zero") {
  Eigen::VectorXd t(4);
  t << 1, 2, 3, 4;
  auto r = mape(t, t);
  REQUIRE(r.percent == 0.0);
  REQUIRE(r.excluded == 0);
}

TEST_CASE("uniform five percent relative error") {
  Eigen::VectorXd t = Eigen::VectorXd::Constant(6, 2.0);
  Eigen::VectorXd e = Eigen::VectorXd::Constant(6, 2.1);
  REQUIRE_THAT(mape(e, t).percent, Catch::Matchers::WithinAbs(5.0, 1e-10));
}

TEST_CASE("near-zero truth points are excluded and counted") {
  Eigen::VectorXd t(5), e(5);
  t << 2.0, 4.0, 0.0005, 5.0, 1.0;
  e << 2.2, 3.8, 7.0, 5.5, 0.9;
  auto r = mape(e, t, 1e-3);
  // hand computation over the four included points
  const double expect =
      100.0 / 4.0 * (0.2 / 2.0 + 0.2 / 4.0 + 0.5 / 5.0 + 0.1 / 1.0);
  REQUIRE_THAT(r.percent, Catch::Matchers::WithinAbs(expect, 1e-9));
  REQUIRE(r.excluded == 1);
  REQUIRE(r.included == 4);
}

TEST_CASE("excluding everything is an error") {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd e = Eigen::VectorXd::Ones(3);
  REQUIRE_THROWS_AS(mape(e, t), EmptyAfterExclusion);
}

TEST_CASE("rmse basics") {
  Eigen::VectorXd t(4);
  t << 1, 2, 3, 4;
  REQUIRE(rmse(t, t) == 0.0);
  Eigen::VectorXd e = t.array() + 0.7;
  REQUIRE_THAT(rmse(e, t), Catch::Matchers::WithinAbs(0.7, 1e-12));
  Eigen::VectorXd wrong(3);
  REQUIRE_THROWS_AS(rmse(wrong, t), LengthMismatch);
}

TEST_CASE("rmse matches the extended-precision direct formula") {
  Rng rng(51);
  Eigen::VectorXd t(10), e(10);
  for (int i = 0; i < 10; ++i) {
    t[i] = rng.uniform(-5, 5);
    e[i] = rng.uniform(-5, 5);
  }
  long double acc = 0.0L;
  for (int i = 0; i < 10; ++i) {
    const long double d = (long double)e[i] - (long double)t[i];
    acc += d * d;
  }
  const double expect = (double)std::sqrt(acc / 10.0L);
  REQUIRE_THAT(rmse(e, t), Catch::Matchers::WithinAbs(expect, 1e-14));
}

TEST_CASE("metrics are permutation invariant") {
  Rng rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + (int)rng.uniform_index(20);
    Eigen::VectorXd t(n), e(n);
    for (int i = 0; i < n; ++i) {
      t[i] = rng.uniform(0.5, 5.0);
      e[i] = rng.uniform(0.5, 5.0);
    }
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    Eigen::VectorXd tp(n), ep(n);
    for (int i = 0; i < n; ++i) {
      tp[i] = t[perm[i]];
      ep[i] = e[perm[i]];
    }
    REQUIRE_THAT(rmse(ep, tp), Catch::Matchers::WithinAbs(rmse(e, t), 1e-12));
    REQUIRE_THAT(mape(ep, tp).percent,
                 Catch::Matchers::WithinAbs(mape(e, t).percent, 1e-10));
  }
}

TEST_CASE("mape epsilon never touches rmse") {
  Rng rng(53);
  Eigen::VectorXd t(20), e(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = (i % 4 == 0) ? 1e-6 : rng.uniform(1.0, 4.0);
    e[i] = rng.uniform(1.0, 4.0);
  }
  const double r = rmse(e, t);
  for (double eps : {0.0, 1e-3, 0.5}) {
    if (eps > 0.0) (void)mape(e, t, eps);
    REQUIRE(rmse(e, t) == r);
  }
}
