#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "loadfuse/kernel.hpp"

namespace loadfuse {

struct GaussianPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // marginal, clamped at 0 after jitter accounting
  std::optional<Eigen::MatrixXd> covariance;
};

// Exact GP regression with a zero mean function and homoscedastic Gaussian
// noise. Reference implementation for the sparse stack: everything here is
// dense Cholesky, nothing approximate.
struct ExactGPModel {
  Eigen::MatrixXd X;  // n x d
  Eigen::VectorXd Y;  // n
  KernelSpec kernel;
  double noise_variance = 1e-2;

  void validate() const {
    if (X.rows() < 1) throw EmptyInput("exact GP needs at least one point");
    if (X.rows() != Y.size())
      throw DimensionMismatch("X rows != Y length");
    if (X.cols() != kernel.input_dim())
      throw DimensionMismatch("X cols != kernel input dim");
    if (!X.allFinite() || !Y.allFinite())
      throw NonFinite("exact GP inputs contain non-finite entries");
    if (!(noise_variance > 0.0))
      throw InvalidSpec("noise variance must be > 0");
  }
};

// Posterior mean  K_*X (K_XX + s2 I)^-1 Y
// Posterior cov   K_** - K_*X (K_XX + s2 I)^-1 K_X*
// via Cholesky solves only.
inline GaussianPrediction gp_predict(const ExactGPModel& model,
                                     const Eigen::MatrixXd& Xs,
                                     bool full_covariance = false) {
  model.validate();
  if (Xs.cols() != model.kernel.input_dim())
    throw DimensionMismatch("test inputs have wrong dimension");

  Eigen::MatrixXd A = kernel_eval(model.kernel, model.X, model.X);
  A.diagonal().array() += model.noise_variance;
  auto fac = jittered_llt(A, model.kernel.jitter, "K_XX + noise");

  const Eigen::MatrixXd Ksx = kernel_eval(model.kernel, Xs, model.X);  // m x n
  const Eigen::VectorXd alpha = fac.llt.solve(model.Y);
  const Eigen::MatrixXd V = fac.llt.solve(Ksx.transpose());            // n x m

  GaussianPrediction pred;
  pred.mean = Ksx * alpha;
  Eigen::VectorXd var =
      Eigen::VectorXd::Constant(Xs.rows(), model.kernel.variance()) -
      (Ksx.array() * V.transpose().array()).rowwise().sum().matrix();
  int clamped = 0;
  for (int i = 0; i < var.size(); ++i)
    if (var[i] < 0.0) {
      var[i] = 0.0;
      ++clamped;
    }
  if (clamped > 0)
    log::warn("gp_predict clamped " + std::to_string(clamped) +
              " negative variances to 0");
  pred.variance = var;
  if (full_covariance)
    pred.covariance = kernel_eval(model.kernel, Xs, Xs) - Ksx * V;
  return pred;
}

// log N(Y | 0, K_XX + s2 I)
inline double gp_log_marginal_likelihood(const ExactGPModel& model) {
  model.validate();
  Eigen::MatrixXd A = kernel_eval(model.kernel, model.X, model.X);
  A.diagonal().array() += model.noise_variance;
  auto fac = jittered_llt(A, model.kernel.jitter, "K_XX + noise");
  const Eigen::VectorXd alpha = fac.llt.solve(model.Y);
  const double n = static_cast<double>(model.X.rows());
  return -0.5 * model.Y.dot(alpha) - 0.5 * log_det_from_llt(fac.llt) -
         0.5 * n * std::log(2.0 * 3.14159265358979323846);
}

}  // namespace loadfuse
