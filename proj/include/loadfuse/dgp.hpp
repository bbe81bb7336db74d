#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <thread>
#include <vector>

#include "loadfuse/features.hpp"
#include "loadfuse/rng.hpp"
#include "loadfuse/svgp.hpp"
#include "loadfuse/tape.hpp"

namespace loadfuse {

// Deep GP: a stack of scalar-output SVGP layers, layer l feeding layer
// l+1, with a Gaussian likelihood of learned homoscedastic noise on top.
// L = 1 degenerates to a plain SVGP. The model works in standardized
// target space; y_standardizer maps predictions back.
struct DGPModel {
  std::vector<SVGPLayer> layers;
  double log_noise_variance = std::log(0.05);
  Standardizer y_standardizer;

  int depth() const { return static_cast<int>(layers.size()); }
  double noise_variance() const { return std::exp(log_noise_variance); }

  void validate() const {
    if (layers.empty()) throw InvalidSpec("DGP needs at least one layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].validate();
      if (l > 0 && layers[l].input_dim() != 1)
        throw DimensionMismatch("hidden layers are scalar: layer " +
                                std::to_string(l) + " expects input dim 1");
    }
    if (!std::isfinite(log_noise_variance))
      throw NonFinite("noise parameter is not finite");
  }
};

// Default architecture: first layer reads the feature columns, hidden
// width 1, identity-skip means everywhere except the final layer.
//
// Layers past the first see a one-dimensional input, where a large
// inducing set is pure redundancy: K_ZZ turns ill-conditioned and its
// KL gradients explode. Those layers get a small grid, a shorter initial
// lengthscale and more jitter.
inline DGPModel make_dgp_model(const Eigen::MatrixXd& X, int n_layers,
                               int inducing, std::uint64_t seed,
                               double init_variance = 1.0,
                               double init_lengthscale = 1.0,
                               double init_noise = 0.05) {
  if (n_layers < 1) throw InvalidSpec("layer count must be >= 1");
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  Rng rng(seed);

  DGPModel model;
  for (int l = 0; l < n_layers; ++l) {
    const bool last = (l == n_layers - 1);
    KernelSpec kernel;
    Eigen::MatrixXd Z;
    if (l == 0) {
      const int M = std::min(inducing, n);
      kernel = KernelSpec::isotropic(init_variance, init_lengthscale, d);
      Z = kmeans_inducing(X, M, rng.derive(100 + l));
    } else {
      const int M = std::min({inducing, 16, n});
      kernel = KernelSpec::isotropic(init_variance,
                                     0.5 * init_lengthscale, 1, 1e-6);
      // hidden inputs start out near the skip value, i.e. the first feature
      Z = kmeans_inducing(X.col(0), M, rng.derive(100 + l));
    }
    model.layers.push_back(SVGPLayer::init(
        kernel, Z, last ? MeanFunction::Zero : MeanFunction::IdentitySkip));
  }
  model.log_noise_variance = std::log(init_noise);
  model.validate();
  return model;
}

// Warm start for the scalar hidden layers: a bottleneck stack trains
// poorly from a cold start because the hidden coordinate begins as a raw
// input feature whose circular aliasing the final layer cannot undo. Seed
// the first layer's variational mean with a smoothed target estimate (a
// fixed-hyperparameter exact GP on a subsample) so the hidden value
// starts as a usable one-dimensional embedding of the response, and place
// the deeper inducing grids over that embedding.
inline void initialize_hidden_embedding(DGPModel& model,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& Y_std,
                                        std::uint64_t seed) {
  const int L = model.depth();
  if (L < 2) return;
  const int n = static_cast<int>(X.rows());
  const int m = std::min(n, 400);
  Eigen::MatrixXd Xs(m, X.cols());
  Eigen::VectorXd Ys(m);
  for (int i = 0; i < m; ++i) {
    const int idx = static_cast<int>(static_cast<std::int64_t>(i) * n / m);
    Xs.row(i) = X.row(idx);
    Ys[i] = Y_std[idx];
  }
  ExactGPModel smoother;
  smoother.X = Xs;
  smoother.Y = Ys;
  smoother.kernel = model.layers[0].kernel;
  smoother.noise_variance = 0.1;

  auto& first = model.layers[0];
  const Eigen::VectorXd h_train = gp_predict(smoother, X).mean;
  first.q_mean = gp_predict(smoother, first.Z).mean -
                 first.mean_function_apply(first.Z);

  // hidden values start near h_train (inner skips are identities from here
  // on); re-seed the deeper layers' inducing inputs over that range
  Rng rng(seed);
  for (int l = 1; l < L; ++l)
    model.layers[l].Z = kmeans_inducing(h_train, model.layers[l].inducing_count(),
                                        rng.derive(300 + l));
}

// One stochastic pass through the stack (the sampled-prediction rule):
// f_l = mu_l(f_{l-1}) + eps * sqrt(var_l(f_{l-1})), eps ~ N(0,1) drawn
// independently per point per layer.
struct ForwardSamples {
  std::vector<Eigen::VectorXd> layer_values;  // one n-vector per layer
};

inline ForwardSamples dgp_sample_forward(const DGPModel& model,
                                         const Eigen::MatrixXd& X, Rng& rng) {
  model.validate();
  ForwardSamples out;
  Eigen::MatrixXd current = X;
  for (const auto& layer : model.layers) {
    auto marg = svgp_marginal(layer, current);
    Eigen::VectorXd f(marg.mean.size());
    for (int i = 0; i < f.size(); ++i)
      f[i] = marg.mean[i] + rng.normal() * std::sqrt(std::max(marg.variance[i], 0.0));
    out.layer_values.push_back(f);
    current = f;
  }
  return out;
}

namespace detail {

struct LayerVars {
  tape::KernelVars kv;
  tape::Var Z;
  tape::Var q_mean;
  tape::Var L_strict;
  tape::Var L_logdiag;
};

struct LayerMarginal {
  tape::Var mean;  // n x 1
  tape::Var var;   // n x 1
};

inline tape::Var assemble_q_factor(tape::Tape& t, const LayerVars& v, int M) {
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(M, M);
  for (int i = 1; i < M; ++i)
    for (int j = 0; j < i; ++j) mask(i, j) = 1.0;
  tape::Var strict = t.cmul(v.L_strict, t.constant(mask));
  return t.add(strict, t.diag_vec(t.exp_(v.L_logdiag)));
}

// K_ZZ needs a concrete jitter before it becomes a psd node; probe the
// ladder on plain values first so the graph never sees a failed Cholesky.
inline double probe_jitter(const Eigen::MatrixXd& Kzz, double base) {
  auto fac = jittered_llt(Kzz, std::max(base, 1e-12), "K_ZZ (elbo)");
  return fac.jitter_used;
}

struct LayerGraph {
  LayerVars vars;
  tape::Var Kzz;  // jittered
  tape::Var Lq;
  tape::Var kl;
};

inline LayerGraph build_layer_graph(tape::Tape& t, const SVGPLayer& layer) {
  LayerGraph g;
  const int M = layer.inducing_count();
  Eigen::MatrixXd lv(1, 1);
  lv(0, 0) = layer.kernel.log_variance;
  g.vars.kv.log_variance = t.param(lv);
  g.vars.kv.log_lengthscales = t.param(layer.kernel.log_lengthscales);
  g.vars.Z = t.param(layer.Z);
  g.vars.q_mean = t.param(layer.q_mean);
  g.vars.L_strict = t.param(layer.q_cov_strict_lower);
  g.vars.L_logdiag = t.param(layer.q_log_diag);

  tape::Var Kzz_raw = tape::kernel_matrix(t, g.vars.kv, g.vars.Z, g.vars.Z);
  const double jitter = probe_jitter(t.val(Kzz_raw), layer.kernel.jitter);
  g.Kzz = t.add_scaled_identity(Kzz_raw, jitter);
  g.Lq = assemble_q_factor(t, g.vars, M);

  // KL[q || p] = (tr(K^-1 S) + m^T K^-1 m - M + logdet K - logdet S) / 2
  tape::Var S = t.matmul(g.Lq, t.transpose(g.Lq));
  tape::Var trace_term = t.trace_(t.psd_solve(g.Kzz, S));
  tape::Var quad_term = t.dot(g.vars.q_mean, t.psd_solve(g.Kzz, g.vars.q_mean));
  tape::Var logdet_k = t.psd_logdet(g.Kzz);
  tape::Var logdet_s = t.scale(t.sum(g.vars.L_logdiag), 2.0);
  tape::Var kl_sum = t.add(t.sub(t.add(trace_term, quad_term), logdet_s),
                           t.add(logdet_k, t.scalar(-static_cast<double>(M))));
  g.kl = t.scale(kl_sum, 0.5);
  return g;
}

// Marginal mean/variance of one layer at (possibly sampled) inputs F.
inline LayerMarginal layer_marginal(tape::Tape& t, const LayerGraph& g,
                                    const SVGPLayer& layer, tape::Var F,
                                    tape::Var skip) {
  const int n = static_cast<int>(t.val(F).rows());
  tape::Var Kzx = tape::kernel_matrix(t, g.vars.kv, g.vars.Z, F);  // M x n
  tape::Var A = t.psd_solve(g.Kzz, Kzx);                           // M x n
  tape::Var mean = t.matmul(t.transpose(A), g.vars.q_mean);        // n x 1
  if (layer.mean_function == MeanFunction::IdentitySkip)
    mean = t.add(mean, skip);

  tape::Var sigf2 = t.exp_(g.vars.kv.log_variance);
  tape::Var prior = t.scale_by(t.constant(Eigen::MatrixXd::Ones(n, 1)), sigf2);
  tape::Var q1 = t.transpose(t.colsum(t.cmul(Kzx, A)));  // n x 1
  tape::Var B = t.matmul(t.transpose(g.Lq), A);          // M x n
  tape::Var q2 = t.transpose(t.colsum(t.cmul(B, B)));    // n x 1
  LayerMarginal m;
  m.mean = mean;
  // the floor also bounds the sqrt adjoint in the sampling path
  m.var = t.max_floor(t.add(t.sub(prior, q1), q2), 1e-8);
  return m;
}

}  // namespace detail

// Per-layer noise draws for the stochastic part of the bound: eps[s][l]
// is an n-vector for sample s and layer l (only layers 0..L-2 are sampled;
// the final layer's Gaussian expectation is taken in closed form).
using ElboEps = std::vector<std::vector<Eigen::VectorXd>>;

inline ElboEps draw_elbo_eps(int depth, int n, int mc_samples, Rng& rng) {
  ElboEps eps(mc_samples);
  for (int s = 0; s < mc_samples; ++s) {
    eps[s].resize(std::max(depth - 1, 0));
    for (int l = 0; l + 1 < depth; ++l) {
      eps[s][l].resize(n);
      for (int i = 0; i < n; ++i) eps[s][l][i] = rng.normal();
    }
  }
  return eps;
}

struct LayerGrads {
  double d_log_variance = 0.0;
  Eigen::VectorXd d_log_lengthscales;
  Eigen::MatrixXd d_Z;
  Eigen::VectorXd d_q_mean;
  Eigen::MatrixXd d_L_strict;
  Eigen::VectorXd d_L_logdiag;
};

struct ElboResult {
  double value = 0.0;
  std::vector<LayerGrads> layer_grads;
  double d_log_noise = 0.0;
};

// Doubly stochastic evidence lower bound on a (mini)batch:
//   scale * E_q(f_L)[log p(y | f_L)]  -  sum_l KL[q(u_l) || p(u_l)]
// where scale = n_total / batch and the expectation averages mc forward
// draws of the hidden layers; the final layer's expectation over its
// Gaussian marginal is analytic for the Gaussian likelihood.
inline ElboResult dgp_elbo_with_grads(const DGPModel& model,
                                      const Eigen::MatrixXd& Xb,
                                      const Eigen::VectorXd& Yb,
                                      const ElboEps& eps, double scale,
                                      bool want_grads = true) {
  model.validate();
  if (Xb.rows() != Yb.size()) throw DimensionMismatch("X rows != Y length");
  if (Xb.rows() == 0) throw EmptyInput("empty batch");
  const int n = static_cast<int>(Xb.rows());
  const int L = model.depth();
  const int S = static_cast<int>(eps.size());
  if (S < 1) throw InvalidSpec("mc_samples must be >= 1");

  tape::Tape t;
  std::vector<detail::LayerGraph> graphs;
  graphs.reserve(L);
  for (const auto& layer : model.layers)
    graphs.push_back(detail::build_layer_graph(t, layer));

  Eigen::MatrixXd ln(1, 1);
  ln(0, 0) = model.log_noise_variance;
  tape::Var log_noise = t.param(ln);

  tape::Var X0 = t.constant(Xb);
  tape::Var skip0 = t.constant(Xb.col(0));
  tape::Var Y = t.constant(Yb);

  // First-layer marginal does not depend on the draws; share it.
  detail::LayerMarginal m0 =
      detail::layer_marginal(t, graphs[0], model.layers[0], X0, skip0);

  auto likelihood = [&](const detail::LayerMarginal& m) {
    tape::Var r = t.sub(Y, m.mean);
    tape::Var sums = t.add(t.sum(t.cmul(r, r)), t.sum(m.var));
    tape::Var inv_noise = t.exp_(t.scale(log_noise, -1.0));
    tape::Var penalty = t.scale(t.scale_by(sums, inv_noise), -0.5);
    tape::Var c = t.scalar(-0.5 * n * std::log(2.0 * 3.14159265358979323846));
    return t.add(t.add(c, t.scale(log_noise, -0.5 * n)), penalty);
  };

  tape::Var ll_total;
  if (L == 1) {
    ll_total = likelihood(m0);
  } else {
    for (int s = 0; s < S; ++s) {
      if (static_cast<int>(eps[s].size()) != L - 1)
        throw DimensionMismatch("eps draws do not match hidden depth");
      detail::LayerMarginal cur = m0;
      tape::Var f;
      for (int l = 1; l < L; ++l) {
        tape::Var noise = t.constant(eps[s][l - 1]);
        f = t.add(cur.mean, t.cmul(noise, t.sqrt_(cur.var)));
        cur = detail::layer_marginal(t, graphs[l], model.layers[l], f, f);
      }
      tape::Var ll = likelihood(cur);
      ll_total = (s == 0) ? ll : t.add(ll_total, ll);
    }
    ll_total = t.scale(ll_total, 1.0 / S);
  }

  tape::Var elbo = t.scale(ll_total, scale);
  for (int l = 0; l < L; ++l) elbo = t.sub(elbo, graphs[l].kl);

  ElboResult out;
  out.value = t.scalar_val(elbo);
  if (!std::isfinite(out.value))
    throw NonFinite("ELBO evaluated to a non-finite value");
  if (!want_grads) return out;

  t.backward(elbo);
  out.layer_grads.resize(L);
  for (int l = 0; l < L; ++l) {
    auto& g = out.layer_grads[l];
    g.d_log_variance = t.grad(graphs[l].vars.kv.log_variance)(0, 0);
    g.d_log_lengthscales = t.grad(graphs[l].vars.kv.log_lengthscales);
    g.d_Z = t.grad(graphs[l].vars.Z);
    g.d_q_mean = t.grad(graphs[l].vars.q_mean);
    g.d_L_strict = t.grad(graphs[l].vars.L_strict);
    g.d_L_logdiag = t.grad(graphs[l].vars.L_logdiag);
  }
  out.d_log_noise = t.grad(log_noise)(0, 0);
  return out;
}

// Unbiased full-batch estimate with fresh draws from rng.
inline double dgp_elbo(const DGPModel& model, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& Y, int mc_samples, Rng& rng) {
  ElboEps eps = draw_elbo_eps(model.depth(), static_cast<int>(X.rows()),
                              mc_samples, rng);
  return dgp_elbo_with_grads(model, X, Y, eps, 1.0, false).value;
}

// Sampled prediction: num_samples independent passes; empirical mean and
// variance per point, plus the likelihood noise (predictive, not latent),
// de-standardized. Per-sample random streams split deterministically from
// the seed, so thread count does not change the result.
inline GaussianPrediction dgp_predict(const DGPModel& model,
                                      const Eigen::MatrixXd& Xs,
                                      int num_samples, std::uint64_t seed,
                                      int threads = 1) {
  model.validate();
  if (num_samples < 1) throw InvalidSpec("num_samples must be >= 1");
  const int n = static_cast<int>(Xs.rows());
  const int L = model.depth();

  // Shared first-layer marginal (inputs are fixed).
  auto m0 = svgp_marginal(model.layers[0], Xs);
  Eigen::VectorXd sd0 = m0.variance.cwiseMax(0.0).cwiseSqrt();

  Eigen::MatrixXd draws(n, num_samples);
  Rng base(seed);

  auto run_sample = [&](int s) {
    Rng rng = base.derive(static_cast<std::uint64_t>(s) + 1);
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f[i] = m0.mean[i] + rng.normal() * sd0[i];
    for (int l = 1; l < L; ++l) {
      auto m = svgp_marginal(model.layers[l], f);
      for (int i = 0; i < n; ++i)
        f[i] = m.mean[i] + rng.normal() * std::sqrt(std::max(m.variance[i], 0.0));
    }
    draws.col(s) = f;
  };

  if (threads <= 1 || num_samples == 1) {
    for (int s = 0; s < num_samples; ++s) run_sample(s);
  } else {
    const int workers = std::min(threads, num_samples);
    std::vector<std::thread> pool;
    std::vector<std::string> worker_errors(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (int s = w; s < num_samples; s += workers) run_sample(s);
        } catch (const std::exception& e) {
          worker_errors[w] = e.what();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : worker_errors)
      if (!err.empty()) throw NonFinite("prediction worker failed: " + err);
  }

  GaussianPrediction out;
  out.mean.resize(n);
  out.variance.resize(n);
  const auto& std = model.y_standardizer;
  for (int i = 0; i < n; ++i) {
    // fixed reduction order: serial and parallel runs agree bit-for-bit
    double acc = 0.0;
    for (int s = 0; s < num_samples; ++s) acc += draws(i, s);
    const double mu = acc / num_samples;
    double sq = 0.0;
    for (int s = 0; s < num_samples; ++s) {
      const double d = draws(i, s) - mu;
      sq += d * d;
    }
    const double var = sq / num_samples + model.noise_variance();
    out.mean[i] = std.inverse_mean(mu);
    out.variance[i] = std.inverse_variance(var);
  }
  return out;
}

}  // namespace loadfuse
