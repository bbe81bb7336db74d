#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "loadfuse/exact_gp.hpp"
#include "loadfuse/kernel.hpp"

namespace loadfuse {

// Inner layers of a deep stack get a skip connection through the first
// input coordinate (plain identity once the hidden width is 1); the final
// layer keeps the zero mean.
enum class MeanFunction { Zero, IdentitySkip };

// One sparse variational GP layer: M inducing inputs Z with a Gaussian
// q(u) = N(m, S) over their function values. S is carried as its Cholesky
// factor, strictly-lower part free and the diagonal in log space, so every
// stored parameter is unconstrained. Scalar output.
struct SVGPLayer {
  KernelSpec kernel;
  Eigen::MatrixXd Z;                    // M x d
  Eigen::VectorXd q_mean;               // M
  Eigen::MatrixXd q_cov_strict_lower;   // M x M, strictly lower triangle used
  Eigen::VectorXd q_log_diag;           // M
  MeanFunction mean_function = MeanFunction::Zero;

  int inducing_count() const { return static_cast<int>(Z.rows()); }
  int input_dim() const { return static_cast<int>(Z.cols()); }

  Eigen::MatrixXd q_cov_factor() const {
    const int M = inducing_count();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M, M);
    L.triangularView<Eigen::StrictlyLower>() =
        q_cov_strict_lower.triangularView<Eigen::StrictlyLower>();
    L.diagonal() = q_log_diag.array().exp();
    return L;
  }

  Eigen::MatrixXd q_cov() const {
    Eigen::MatrixXd L = q_cov_factor();
    return L * L.transpose();
  }

  // m = 0, S = small * I: the stable cold start for stochastic VI.
  static SVGPLayer init(KernelSpec kernel, Eigen::MatrixXd inducing,
                        MeanFunction mean_fn = MeanFunction::Zero,
                        double s_init = 1e-5) {
    SVGPLayer l;
    l.kernel = std::move(kernel);
    l.Z = std::move(inducing);
    const int M = l.inducing_count();
    if (M < 1) throw InvalidSpec("layer needs at least one inducing input");
    if (l.Z.cols() != l.kernel.input_dim())
      throw DimensionMismatch("inducing inputs vs kernel dimension");
    l.q_mean = Eigen::VectorXd::Zero(M);
    l.q_cov_strict_lower = Eigen::MatrixXd::Zero(M, M);
    l.q_log_diag = Eigen::VectorXd::Constant(M, 0.5 * std::log(s_init));
    l.mean_function = mean_fn;
    return l;
  }

  // Loads q from an explicit Gaussian (used by the exact-posterior oracles).
  void set_q(const Eigen::VectorXd& m, const Eigen::MatrixXd& S) {
    const int M = inducing_count();
    if (m.size() != M || S.rows() != M || S.cols() != M)
      throw DimensionMismatch("set_q shape mismatch");
    auto fac = jittered_llt(S, 0.0, "q covariance");
    Eigen::MatrixXd L = fac.llt.matrixL();
    q_mean = m;
    q_cov_strict_lower = Eigen::MatrixXd::Zero(M, M);
    q_cov_strict_lower.triangularView<Eigen::StrictlyLower>() =
        L.triangularView<Eigen::StrictlyLower>();
    q_log_diag = L.diagonal().array().log();
  }

  Eigen::VectorXd mean_function_apply(const Eigen::MatrixXd& X) const {
    if (mean_function == MeanFunction::Zero)
      return Eigen::VectorXd::Zero(X.rows());
    return X.col(0);
  }

  void validate() const {
    if (inducing_count() < 1) throw InvalidSpec("M must be >= 1");
    if (q_mean.size() != inducing_count() ||
        q_log_diag.size() != inducing_count() ||
        q_cov_strict_lower.rows() != inducing_count() ||
        q_cov_strict_lower.cols() != inducing_count())
      throw DimensionMismatch("variational state shapes disagree with Z");
    if (!Z.allFinite() || !q_mean.allFinite() || !q_log_diag.allFinite())
      throw NonFinite("layer parameters contain non-finite entries");
  }
};

// Closed-form marginal q(f) at X:
//   mean = K_XZ Kzz^-1 m (+ mean function)
//   cov  = K_XX - K_XZ Kzz^-1 (Kzz - S) Kzz^-1 K_ZX
inline GaussianPrediction svgp_marginal(const SVGPLayer& layer,
                                        const Eigen::MatrixXd& X,
                                        bool full_covariance = false) {
  layer.validate();
  if (X.cols() != layer.input_dim())
    throw DimensionMismatch("svgp_marginal: input dimension mismatch");

  const Eigen::MatrixXd Kzz = kernel_eval(layer.kernel, layer.Z, layer.Z);
  auto fac = jittered_llt(Kzz, std::max(layer.kernel.jitter, 1e-12), "K_ZZ");
  const Eigen::MatrixXd Kzx = kernel_eval(layer.kernel, layer.Z, X);  // M x n
  const Eigen::MatrixXd A = fac.llt.solve(Kzx);                       // M x n
  const Eigen::MatrixXd B = layer.q_cov_factor().transpose() * A;     // M x n

  GaussianPrediction out;
  out.mean = A.transpose() * layer.q_mean + layer.mean_function_apply(X);

  Eigen::VectorXd var =
      Eigen::VectorXd::Constant(X.rows(), layer.kernel.variance()) -
      (Kzx.array() * A.array()).colwise().sum().matrix().transpose() +
      B.array().square().colwise().sum().matrix().transpose();
  int clamped = 0;
  for (int i = 0; i < var.size(); ++i)
    if (var[i] < 0.0) {
      var[i] = 0.0;
      ++clamped;
    }
  if (clamped > 0)
    log::warn("svgp_marginal clamped " + std::to_string(clamped) +
              " negative variances");
  out.variance = var;

  if (full_covariance)
    out.covariance = kernel_eval(layer.kernel, X, X) - Kzx.transpose() * A +
                     B.transpose() * B;
  return out;
}

// KL[ N(m, S) || N(0, K_ZZ) ], the per-layer regularizer of the bound.
inline double svgp_kl(const SVGPLayer& layer) {
  layer.validate();
  const int M = layer.inducing_count();
  const Eigen::MatrixXd Kzz = kernel_eval(layer.kernel, layer.Z, layer.Z);
  auto fac = jittered_llt(Kzz, std::max(layer.kernel.jitter, 1e-12), "K_ZZ");
  const Eigen::MatrixXd Lk = fac.llt.matrixL();
  const Eigen::MatrixXd Lq = layer.q_cov_factor();

  const Eigen::MatrixXd W =
      Lk.triangularView<Eigen::Lower>().solve(Lq);  // Lk^-1 Lq
  const Eigen::VectorXd u =
      Lk.triangularView<Eigen::Lower>().solve(layer.q_mean);
  const double trace_term = W.squaredNorm();
  const double quad_term = u.squaredNorm();
  const double logdet_k = log_det_from_llt(fac.llt);
  const double logdet_s = 2.0 * layer.q_log_diag.sum();
  const double kl =
      0.5 * (trace_term + quad_term - M + logdet_k - logdet_s);
  return std::max(kl, 0.0);
}

}  // namespace loadfuse
