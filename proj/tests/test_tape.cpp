#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <functional>

#include "loadfuse/rng.hpp"
#include "loadfuse/tape.hpp"

using namespace loadfuse;
using tape::Tape;
using tape::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

double eval_scalar(const Builder& f, const std::vector<Eigen::MatrixXd>& ps) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& p : ps) vars.push_back(t.param(p));
  return t.scalar_val(f(t, vars));
}

// Central finite differences over every entry of every parameter block.
double max_fd_rel_err(const Builder& f, const std::vector<Eigen::MatrixXd>& ps,
                      double h = 1e-5) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& p : ps) vars.push_back(t.param(p));
  Var out = f(t, vars);
  t.backward(out);

  double worst = 0.0;
  for (std::size_t b = 0; b < ps.size(); ++b) {
    const Eigen::MatrixXd g = t.grad(vars[b]);
    for (int i = 0; i < ps[b].rows(); ++i) {
      for (int j = 0; j < ps[b].cols(); ++j) {
        auto pp = ps;
        pp[b](i, j) += h;
        const double fp = eval_scalar(f, pp);
        pp[b](i, j) -= 2 * h;
        const double fm = eval_scalar(f, pp);
        const double fd = (fp - fm) / (2 * h);
        const double denom =
            std::max({std::fabs(fd), std::fabs(g(i, j)), 1e-6});
        worst = std::max(worst, std::fabs(g(i, j) - fd) / denom);
      }
    }
  }
  return worst;
}

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c, double lo, double hi) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("elementwise chain gradients match finite differences") {
  Rng rng(1);
  std::vector<Eigen::MatrixXd> ps = {random_matrix(rng, 3, 4, 0.5, 2.0),
                                     random_matrix(rng, 3, 4, 0.5, 2.0)};
  Builder f = [](Tape& t, const std::vector<Var>& v) {
    Var a = v[0], b = v[1];
    Var e1 = t.sum(t.cmul(t.exp_(t.scale(a, 0.3)), t.log_(b)));
    Var e2 = t.sum(t.sqrt_(t.add(a, b)));
    Var e3 = t.sum(t.inv_(t.add(t.cmul(a, a), b)));
    Var e4 = t.sum(t.max_floor(t.sub(a, b), 0.1));
    return t.add(t.add(e1, e2), t.add(e3, e4));
  };
  REQUIRE(max_fd_rel_err(f, ps) < 1e-6);
}

TEST_CASE("matrix algebra and PSD primitives match finite differences") {
  Rng rng(2);
  std::vector<Eigen::MatrixXd> ps = {random_matrix(rng, 3, 3, -1.0, 1.0),
                                     random_matrix(rng, 3, 2, -1.0, 1.0)};
  Builder f = [](Tape& t, const std::vector<Var>& v) {
    Var A = v[0], B = v[1];
    Var S = t.add_scaled_identity(t.matmul(A, t.transpose(A)), 2.0);
    Var BBt = t.matmul(B, t.transpose(B));
    Var solve_term = t.trace_(t.psd_solve(S, BBt));
    Var logdet_term = t.psd_logdet(S);
    return t.add(solve_term, logdet_term);
  };
  REQUIRE(max_fd_rel_err(f, ps) < 1e-6);
}

TEST_CASE("broadcast and reduction gradients match finite differences") {
  Rng rng(3);
  std::vector<Eigen::MatrixXd> ps = {
      random_matrix(rng, 4, 1, 0.5, 1.5), random_matrix(rng, 1, 3, 0.5, 1.5),
      random_matrix(rng, 1, 1, 0.5, 1.5), random_matrix(rng, 4, 3, -1.0, 1.0)};
  Builder f = [](Tape& t, const std::vector<Var>& v) {
    Var col = v[0], row = v[1], s = v[2], M = v[3];
    Var grid = t.cmul(t.broadcast_col(col, 3), t.broadcast_row(row, 4));
    Var e1 = t.sum(t.cmul(grid, t.scale_by(M, s)));
    Var e2 = t.sum(t.rowsum(t.cmul(M, M)));
    Var e3 = t.sum(t.colsum(M));
    Var e4 = t.trace_(t.diag_vec(col));
    Var e5 = t.dot(col, col);
    return t.add(t.add(e1, e2), t.add(t.add(e3, e4), e5));
  };
  REQUIRE(max_fd_rel_err(f, ps) < 1e-6);
}

TEST_CASE("kernel matrix builder matches plain kernel_eval and FD") {
  Rng rng(4);
  Eigen::MatrixXd X = random_matrix(rng, 5, 2, -2.0, 2.0);
  Eigen::MatrixXd Z = random_matrix(rng, 3, 2, -2.0, 2.0);
  Eigen::MatrixXd logv(1, 1), logls(2, 1);
  logv(0, 0) = 0.4;
  logls << -0.3, 0.5;

  // forward agreement with the plain implementation
  {
    Tape t;
    tape::KernelVars kv{t.param(logv), t.param(logls)};
    Var K = tape::kernel_matrix(t, kv, t.constant(X), t.constant(Z));
    KernelSpec spec;
    spec.log_variance = logv(0, 0);
    spec.log_lengthscales = logls.col(0);
    Eigen::MatrixXd Kplain = kernel_eval(spec, X, Z);
    REQUIRE((t.val(K) - Kplain).cwiseAbs().maxCoeff() < 1e-13);
  }

  std::vector<Eigen::MatrixXd> ps = {X, Z, logv, logls};
  Builder f = [](Tape& t, const std::vector<Var>& v) {
    tape::KernelVars kv{v[2], v[3]};
    Var K = tape::kernel_matrix(t, kv, v[0], v[1]);
    // weight entries asymmetrically so gradients do not cancel
    Eigen::MatrixXd W(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) W(i, j) = 0.2 * (i + 1) - 0.3 * j;
    return t.sum(t.cmul(K, t.constant(W)));
  };
  REQUIRE(max_fd_rel_err(f, ps) < 1e-6);
}

TEST_CASE("gradient of an unused parameter is zero") {
  Tape t;
  Var a = t.param(Eigen::MatrixXd::Ones(2, 2));
  Var b = t.param(Eigen::MatrixXd::Ones(2, 2));
  Var out = t.sum(a);
  t.backward(out);
  REQUIRE(t.grad(b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(t.grad(a).minCoeff() == 1.0);
}

TEST_CASE("psd_solve rejects indefinite input") {
  Tape t;
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 3.0, 3.0, 1.0;
  Var A = t.param(bad);
  Var B = t.constant(Eigen::MatrixXd::Identity(2, 2));
  REQUIRE_THROWS_AS(t.psd_solve(A, B), NotPositiveDefinite);
}
