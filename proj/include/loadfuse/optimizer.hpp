#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "loadfuse/errors.hpp"

namespace loadfuse {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment ascent over a flat list of matrix-valued parameter
// blocks. Callers register blocks once and then feed gradients in the same
// order each step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void register_block(Eigen::MatrixXd* param, std::string name) {
    params_.push_back(param);
    names_.push_back(std::move(name));
    m_.emplace_back(Eigen::MatrixXd::Zero(param->rows(), param->cols()));
    v_.emplace_back(Eigen::MatrixXd::Zero(param->rows(), param->cols()));
  }

  std::size_t block_count() const { return params_.size(); }
  const std::string& block_name(std::size_t i) const { return names_[i]; }

  // Gradient-ascent step; grads[i] matches the i-th registered block.
  void step(const std::vector<Eigen::MatrixXd>& grads) {
    if (grads.size() != params_.size())
      throw DimensionMismatch("Adam: gradient block count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!grads[i].allFinite())
        throw NonFinite("non-finite gradient in block '" + names_[i] +
                        "' at step " + std::to_string(t_));
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] +
              (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      *params_[i] += (cfg_.learning_rate * (m_[i] / c1).array() /
                      ((v_[i] / c2).array().sqrt() + cfg_.epsilon))
                         .matrix();
    }
  }

  long step_count() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Eigen::MatrixXd*> params_;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long t_ = 0;
};

}  // namespace loadfuse
