#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <vector>

#include "loadfuse/dgp.hpp"
#include "loadfuse/optimizer.hpp"

namespace loadfuse {

struct TrainConfig {
  double learning_rate = 0.01;
  int iterations = 2000;
  int minibatch = 256;
  int mc_samples = 5;
  std::uint64_t seed = 0;
  bool train_inducing = true;  // freeze Z when false

  // smoothed-ELBO early stop; tolerance 0 disables
  int convergence_window = 50;
  double convergence_tol = 0.0;
  double divergence_factor = 25.0;

  bool init_inner_from_targets = true;  // warm-start hidden layers

  int layers = 2;
  int inducing = 64;
  double init_variance = 1.0;
  double init_lengthscale = 1.0;
  // the normalized-time feature starts smooth so that extrapolation leans
  // on the daily phase unless the data insists otherwise
  double init_time_lengthscale = 4.0;
  double init_noise = 0.05;
  int predict_samples = 200;

  void validate() const {
    if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
    if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (inducing < 1) throw ConfigError("inducing must be >= 1");
    if (convergence_window < 1) throw ConfigError("window must be >= 1");
    if (predict_samples < 1) throw ConfigError("predict_samples must be >= 1");
  }
};

struct TrainingTrace {
  struct Row {
    int iteration;
    double elbo;
    double wall_ms;
  };
  std::vector<Row> rows;

  void to_csv(std::ostream& out) const {
    out << "iteration,elbo,wall_ms\n";
    char buf[96];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.3f\n", r.iteration, r.elbo,
                    r.wall_ms);
      out << buf;
    }
  }
};

// Maximizes the doubly stochastic bound by adaptive-moment gradient
// ascent. Targets are standardized in place into the model; minibatches
// and MC draws come off deterministic child streams of the seed.
inline TrainingTrace dgp_train(DGPModel& model, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& Y_raw,
                               const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  const int n = static_cast<int>(X.rows());
  if (n != Y_raw.size()) throw DimensionMismatch("X rows != Y length");
  if (cfg.minibatch > n && cfg.minibatch != n) {
    // allowed: clamp to full batch
  }
  const int batch = std::min(cfg.minibatch, n);

  model.y_standardizer = Standardizer::fit(Y_raw);
  const Eigen::VectorXd Y = model.y_standardizer.transform(Y_raw);

  const int L = model.depth();

  // Parameter blocks live as plain matrices during the run; the model is
  // refreshed from them every iteration.
  struct Blocks {
    Eigen::MatrixXd log_var, log_ls, Z, q_mean, L_strict, L_logdiag;
  };
  std::vector<Blocks> blocks(L);
  for (int l = 0; l < L; ++l) {
    auto& b = blocks[l];
    auto& layer = model.layers[l];
    b.log_var = Eigen::MatrixXd::Constant(1, 1, layer.kernel.log_variance);
    b.log_ls = layer.kernel.log_lengthscales;
    b.Z = layer.Z;
    b.q_mean = layer.q_mean;
    b.L_strict = layer.q_cov_strict_lower;
    b.L_logdiag = layer.q_log_diag;
  }
  Eigen::MatrixXd log_noise =
      Eigen::MatrixXd::Constant(1, 1, model.log_noise_variance);

  Adam adam({cfg.learning_rate});
  for (int l = 0; l < L; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    adam.register_block(&blocks[l].log_var, p + "log_variance");
    adam.register_block(&blocks[l].log_ls, p + "log_lengthscales");
    if (cfg.train_inducing) adam.register_block(&blocks[l].Z, p + "Z");
    adam.register_block(&blocks[l].q_mean, p + "q_mean");
    adam.register_block(&blocks[l].L_strict, p + "q_cov_lower");
    adam.register_block(&blocks[l].L_logdiag, p + "q_cov_logdiag");
  }
  adam.register_block(&log_noise, "log_noise");

  auto refresh_model = [&]() {
    for (int l = 0; l < L; ++l) {
      auto& layer = model.layers[l];
      layer.kernel.log_variance = blocks[l].log_var(0, 0);
      layer.kernel.log_lengthscales = blocks[l].log_ls;
      layer.Z = blocks[l].Z;
      layer.q_mean = blocks[l].q_mean;
      layer.q_cov_strict_lower = blocks[l].L_strict;
      layer.q_log_diag = blocks[l].L_logdiag;
    }
    model.log_noise_variance = log_noise(0, 0);
  };

  Rng batch_rng = Rng(cfg.seed).derive(11);
  Rng mc_rng = Rng(cfg.seed).derive(12);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainingTrace trace;
  trace.rows.reserve(cfg.iterations);
  const auto t0 = std::chrono::steady_clock::now();
  double initial_elbo = 0.0;
  int bad_streak = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    Eigen::MatrixXd Xb;
    Eigen::VectorXd Yb;
    if (batch == n) {
      Xb = X;
      Yb = Y;
    } else {
      // partial Fisher-Yates: first `batch` entries of a fresh shuffle
      for (int i = 0; i < batch; ++i) {
        const int j =
            i + static_cast<int>(batch_rng.uniform_index(n - i));
        std::swap(order[i], order[j]);
      }
      Xb.resize(batch, X.cols());
      Yb.resize(batch);
      for (int i = 0; i < batch; ++i) {
        Xb.row(i) = X.row(order[i]);
        Yb[i] = Y[order[i]];
      }
    }

    ElboEps eps = draw_elbo_eps(L, batch, cfg.mc_samples, mc_rng);
    ElboResult res;
    try {
      res = dgp_elbo_with_grads(model, Xb, Yb, eps,
                                static_cast<double>(n) / batch);
    } catch (const NonFinite& e) {
      throw NonFinite(std::string(e.what()) + " at iteration " +
                      std::to_string(it));
    }

    std::vector<Eigen::MatrixXd> grads;
    for (int l = 0; l < L; ++l) {
      auto& g = res.layer_grads[l];
      grads.push_back(Eigen::MatrixXd::Constant(1, 1, g.d_log_variance));
      grads.push_back(g.d_log_lengthscales);
      if (cfg.train_inducing) grads.push_back(g.d_Z);
      grads.push_back(g.d_q_mean);
      grads.push_back(g.d_L_strict);
      grads.push_back(g.d_L_logdiag);
    }
    grads.push_back(Eigen::MatrixXd::Constant(1, 1, res.d_log_noise));

    try {
      adam.step(grads);
    } catch (const NonFinite& e) {
      throw NonFinite(std::string(e.what()) + " at iteration " +
                      std::to_string(it));
    }
    refresh_model();

    const double wall =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    trace.rows.push_back({it, res.value, wall});

    if (it == 0) initial_elbo = res.value;
    if (res.value <
        initial_elbo - cfg.divergence_factor * (std::fabs(initial_elbo) + 1.0)) {
      if (++bad_streak >= cfg.convergence_window)
        throw Diverged("ELBO fell from " + std::to_string(initial_elbo) +
                       " to " + std::to_string(res.value) + " for " +
                       std::to_string(bad_streak) + " iterations");
    } else {
      bad_streak = 0;
    }

    if (cfg.convergence_tol > 0 &&
        static_cast<int>(trace.rows.size()) >= 2 * cfg.convergence_window) {
      const auto& rows = trace.rows;
      const std::size_t w = cfg.convergence_window;
      double recent = 0.0, before = 0.0;
      for (std::size_t i = rows.size() - w; i < rows.size(); ++i)
        recent += rows[i].elbo;
      for (std::size_t i = rows.size() - 2 * w; i < rows.size() - w; ++i)
        before += rows[i].elbo;
      if ((recent - before) / w < cfg.convergence_tol) break;
    }
  }
  return trace;
}

}  // namespace loadfuse
