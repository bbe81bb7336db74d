#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "loadfuse/kernel.hpp"
#include "loadfuse/rng.hpp"

using namespace loadfuse;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c, double lo, double hi) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Per-entry loop, no vectorized shortcuts.
double kernel_entry_oracle(double var, const Eigen::VectorXd& ls,
                           const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  long double q = 0.0L;
  for (int d = 0; d < a.size(); ++d) {
    const long double z = (a[d] - b[d]) / ls[d];
    q += z * z;
  }
  return var * static_cast<double>(std::exp(-0.5L * q));
}

}  // namespace

TEST_CASE("zero distance returns the signal variance") {
  auto k = KernelSpec::isotropic(2.5, 0.7, 3);
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(1, 3, 0.4);
  auto K = kernel_eval(k, a, a);
  REQUIRE_THAT(K(0, 0), Catch::Matchers::WithinAbs(2.5, 1e-14));
}

TEST_CASE("unit lengthscale at distance sqrt(2) gives exp(-1)") {
  auto k = KernelSpec::isotropic(1.0, 1.0, 2);
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  auto K = kernel_eval(k, a, b);
  REQUIRE_THAT(K(0, 0),
               Catch::Matchers::WithinAbs(0.36787944117144233, 1e-14));
}

TEST_CASE("kernel matrix matches the per-entry oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const double var = rng.uniform(0.1, 4.0);
    Eigen::VectorXd ls(3);
    for (int d = 0; d < 3; ++d) ls[d] = rng.uniform(0.2, 3.0);
    auto k = KernelSpec::make(var, ls);
    auto A = random_matrix(rng, 5, 3, -2, 2);
    auto B = random_matrix(rng, 4, 3, -2, 2);
    auto K = kernel_eval(k, A, B);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j)
        REQUIRE_THAT(K(i, j),
                     Catch::Matchers::WithinAbs(
                         kernel_entry_oracle(var, ls, A.row(i), B.row(j)),
                         1e-12));
  }
}

TEST_CASE("dimension mismatch is rejected") {
  auto k = KernelSpec::isotropic(1.0, 1.0, 2);
  Eigen::MatrixXd a(1, 3);
  a.setZero();
  REQUIRE_THROWS_AS(kernel_eval(k, a, a), DimensionMismatch);
}

TEST_CASE("gram matrix with jitter passes Cholesky across hyperparameters") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + (int)rng.uniform_index(20);
    const int d = 1 + (int)rng.uniform_index(3);
    Eigen::VectorXd ls(d);
    for (int i = 0; i < d; ++i) ls[i] = std::exp(rng.uniform(-2.0, 2.0));
    auto k = KernelSpec::make(std::exp(rng.uniform(-2.0, 2.0)), ls);
    auto X = random_matrix(rng, n, d, -3, 3);
    auto G = kernel_gram(k, X);
    REQUIRE((G - G.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_NOTHROW(jittered_llt(G, 0.0, "gram"));
  }
}

TEST_CASE("invalid kernel parameters are rejected") {
  REQUIRE_THROWS_AS(KernelSpec::isotropic(0.0, 1.0, 1), InvalidSpec);
  REQUIRE_THROWS_AS(KernelSpec::isotropic(1.0, -1.0, 1), InvalidSpec);
  REQUIRE_THROWS_AS(KernelSpec::isotropic(1.0, 1.0, 1, -0.5), InvalidSpec);
}
