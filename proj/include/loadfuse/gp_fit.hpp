#pragma once

#include <Eigen/Dense>
#include <vector>

#include "loadfuse/exact_gp.hpp"
#include "loadfuse/optimizer.hpp"
#include "loadfuse/tape.hpp"

namespace loadfuse {

// log N(Y | 0, K + s2 I) as a tape expression. Gradient blocks come back
// in the order {log_variance, log_lengthscales, log_noise}.
struct ExactLmlGrads {
  double value = 0.0;
  double d_log_variance = 0.0;
  Eigen::VectorXd d_log_lengthscales;
  double d_log_noise = 0.0;
};

inline ExactLmlGrads exact_lml_with_grads(const ExactGPModel& model) {
  model.validate();
  tape::Tape t;
  tape::KernelVars kv;
  Eigen::MatrixXd lv(1, 1);
  lv(0, 0) = model.kernel.log_variance;
  kv.log_variance = t.param(lv);
  kv.log_lengthscales = t.param(model.kernel.log_lengthscales);
  Eigen::MatrixXd ln(1, 1);
  ln(0, 0) = std::log(model.noise_variance);
  tape::Var log_noise = t.param(ln);

  tape::Var X = t.constant(model.X);
  tape::Var Y = t.constant(model.Y);
  const int n = static_cast<int>(model.X.rows());

  tape::Var K = tape::kernel_matrix(t, kv, X, X);
  tape::Var noise_eye = t.scale_by(
      t.constant(Eigen::MatrixXd::Identity(n, n)), t.exp_(log_noise));
  tape::Var A = t.add(K, noise_eye);
  A = t.add_scaled_identity(A, model.kernel.jitter);

  tape::Var alpha = t.psd_solve(A, Y);
  tape::Var quad = t.dot(Y, alpha);
  tape::Var logdet = t.psd_logdet(A);
  tape::Var lml = t.scale(t.add(quad, logdet), -0.5);
  lml = t.add(lml, t.scalar(-0.5 * n * std::log(2.0 * 3.14159265358979323846)));

  t.backward(lml);

  ExactLmlGrads out;
  out.value = t.scalar_val(lml);
  out.d_log_variance = t.grad(kv.log_variance)(0, 0);
  out.d_log_lengthscales = t.grad(kv.log_lengthscales);
  out.d_log_noise = t.grad(log_noise)(0, 0);
  return out;
}

struct ExactFitConfig {
  int iterations = 200;
  double learning_rate = 0.05;
};

// Type-II maximum likelihood for the exact GP: Adam ascent on the log
// marginal likelihood over log hyperparameters.
inline std::vector<double> fit_exact_gp(ExactGPModel& model,
                                        const ExactFitConfig& cfg = {}) {
  std::vector<double> trace;
  Eigen::MatrixXd lv(1, 1), ln(1, 1);
  lv(0, 0) = model.kernel.log_variance;
  ln(0, 0) = std::log(model.noise_variance);
  Eigen::MatrixXd lls = model.kernel.log_lengthscales;

  Adam adam({cfg.learning_rate});
  adam.register_block(&lv, "log_variance");
  adam.register_block(&lls, "log_lengthscales");
  adam.register_block(&ln, "log_noise");

  for (int it = 0; it < cfg.iterations; ++it) {
    model.kernel.log_variance = lv(0, 0);
    model.kernel.log_lengthscales = lls;
    model.noise_variance = std::exp(ln(0, 0));
    auto g = exact_lml_with_grads(model);
    trace.push_back(g.value);
    Eigen::MatrixXd gv(1, 1), gn(1, 1);
    gv(0, 0) = g.d_log_variance;
    gn(0, 0) = g.d_log_noise;
    adam.step({gv, g.d_log_lengthscales, gn});
  }
  model.kernel.log_variance = lv(0, 0);
  model.kernel.log_lengthscales = lls;
  model.noise_variance = std::exp(ln(0, 0));
  return trace;
}

}  // namespace loadfuse
