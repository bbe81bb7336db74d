#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "loadfuse/errors.hpp"
#include "loadfuse/log.hpp"

namespace loadfuse {

// RBF kernel k(a,b) = sigma_f^2 * exp(-1/2 (a-b)^T M^-1 (a-b)) with M
// restricted to a diagonal of squared lengthscales (ARD). Parameters live
// in log space so the optimizer is unconstrained; accessors exponentiate.
struct KernelSpec {
  double log_variance = 0.0;          // log sigma_f^2
  Eigen::VectorXd log_lengthscales;   // one per input dimension
  double jitter = 1e-8;

  double variance() const { return std::exp(log_variance); }
  Eigen::VectorXd lengthscales() const {
    return log_lengthscales.array().exp();
  }
  int input_dim() const { return static_cast<int>(log_lengthscales.size()); }

  static KernelSpec make(double variance, const Eigen::VectorXd& lengthscales,
                         double jitter = 1e-8) {
    if (!(variance > 0.0)) throw InvalidSpec("kernel variance must be > 0");
    for (int i = 0; i < lengthscales.size(); ++i)
      if (!(lengthscales[i] > 0.0))
        throw InvalidSpec("kernel lengthscales must be > 0");
    if (jitter < 0.0) throw InvalidSpec("jitter must be >= 0");
    KernelSpec k;
    k.log_variance = std::log(variance);
    k.log_lengthscales = lengthscales.array().log();
    k.jitter = jitter;
    return k;
  }

  static KernelSpec isotropic(double variance, double lengthscale, int dim,
                              double jitter = 1e-8) {
    return make(variance, Eigen::VectorXd::Constant(dim, lengthscale), jitter);
  }
};

// Pairwise squared distances of lengthscale-scaled rows.
inline Eigen::MatrixXd scaled_sqdist(const KernelSpec& spec,
                                     const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& B) {
  const Eigen::VectorXd inv_ls = (-spec.log_lengthscales.array()).exp();
  const Eigen::MatrixXd As = A * inv_ls.asDiagonal();
  const Eigen::MatrixXd Bs = B * inv_ls.asDiagonal();
  const Eigen::VectorXd a2 = As.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * As * Bs.transpose());
  d.colwise() += a2;
  d.rowwise() += b2.transpose();
  return d.cwiseMax(0.0);  // cancellation can leave tiny negatives
}

inline Eigen::MatrixXd kernel_eval(const KernelSpec& spec,
                                   const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& B) {
  if (A.cols() != spec.input_dim() || B.cols() != spec.input_dim())
    throw DimensionMismatch("kernel_eval: input dim " +
                            std::to_string(A.cols()) + "/" +
                            std::to_string(B.cols()) + " vs lengthscale dim " +
                            std::to_string(spec.input_dim()));
  if (!A.allFinite() || !B.allFinite())
    throw NonFinite("kernel_eval: non-finite inputs");
  return spec.variance() *
         (-0.5 * scaled_sqdist(spec, A, B).array()).exp().matrix();
}

// K(X,X) with the spec's own jitter on the diagonal.
inline Eigen::MatrixXd kernel_gram(const KernelSpec& spec,
                                   const Eigen::MatrixXd& X) {
  Eigen::MatrixXd K = kernel_eval(spec, X, X);
  K.diagonal().array() += spec.jitter;
  return K;
}

struct JitteredLLT {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter_used = 0.0;
};

// Cholesky with an escalation ladder; each rung is logged, exhaustion is a
// hard error rather than a silent fix.
inline JitteredLLT jittered_llt(const Eigen::MatrixXd& M,
                                double initial_jitter = 0.0,
                                const std::string& what = "matrix") {
  constexpr double kLadder[] = {1e-8, 1e-6, 1e-4};
  double extra = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::MatrixXd A = M;
    A.diagonal().array() += initial_jitter + extra;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      if (attempt > 0)
        log::warn("jitter escalated to " + std::to_string(extra) +
                  " while factoring " + what);
      return {std::move(llt), initial_jitter + extra};
    }
    if (attempt < 3) extra = kLadder[attempt];
  }
  throw NotPositiveDefinite(what + " is not positive definite even with jitter 1e-4");
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace loadfuse
