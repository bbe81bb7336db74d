#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "loadfuse/errors.hpp"
#include "loadfuse/kernel.hpp"

namespace loadfuse::tape {

// Reverse-mode Wengert list over dense Eigen matrices. The graph is built
// per evaluation and discarded; parents always precede children, so one
// reverse sweep propagates adjoints. Scalars are 1x1 matrices.
//
// Symmetric positive-definite algebra enters through two primitives,
// psd_solve and psd_logdet, which factor internally and expose exact
// adjoints; the Cholesky factor itself is never a differentiated value.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var constant(Eigen::MatrixXd v) { return push(std::move(v), false); }

  Var scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var param(Eigen::MatrixXd v) { return push(std::move(v), true); }

  const Eigen::MatrixXd& val(Var x) const { return nodes_[x.id].value; }

  double scalar_val(Var x) const {
    const auto& m = nodes_[x.id].value;
    if (m.rows() != 1 || m.cols() != 1)
      throw DimensionMismatch("scalar_val on a non-scalar node");
    return m(0, 0);
  }

  // Zero matrix when no gradient reached the node.
  Eigen::MatrixXd grad(Var x) const {
    const auto& n = nodes_[x.id];
    if (n.grad.size() == 0)
      return Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var out) {
    const auto& o = nodes_[out.id].value;
    if (o.rows() != 1 || o.cols() != 1)
      throw DimensionMismatch("backward expects a scalar output");
    accumulate(out.id, Eigen::MatrixXd::Ones(1, 1));
    for (int id = out.id; id >= 0; --id) {
      auto& n = nodes_[id];
      if (n.grad.size() != 0 && n.backprop) n.backprop(*this, n.grad);
    }
  }

  // ---- arithmetic ----

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Var out = push(val(a) + val(b), needs(a) || needs(b));
    if (needs(out)) {
      bind(out, [a, b](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
      });
    }
    return out;
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Var out = push(val(a) - val(b), needs(a) || needs(b));
    if (needs(out)) {
      bind(out, [a, b](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, -g);
      });
    }
    return out;
  }

  Var cmul(Var a, Var b) {
    check_same_shape(a, b, "cmul");
    Var out = push(val(a).cwiseProduct(val(b)), needs(a) || needs(b));
    if (needs(out)) {
      bind(out, [a, b](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g.cwiseProduct(t.val(b)));
        t.accumulate(b.id, g.cwiseProduct(t.val(a)));
      });
    }
    return out;
  }

  Var scale(Var a, double c) {
    Var out = push(c * val(a), needs(a));
    if (needs(out)) {
      bind(out, [a, c](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, c * g);
      });
    }
    return out;
  }

  // s is 1x1; out = s * a elementwise.
  Var scale_by(Var a, Var s) {
    const double sv = scalar_val(s);
    Var out = push(sv * val(a), needs(a) || needs(s));
    if (needs(out)) {
      bind(out, [a, s](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, t.scalar_val(s) * g);
        Eigen::MatrixXd gs(1, 1);
        gs(0, 0) = g.cwiseProduct(t.val(a)).sum();
        t.accumulate(s.id, gs);
      });
    }
    return out;
  }

  Var matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows())
      throw DimensionMismatch("matmul shape mismatch");
    Var out = push(val(a) * val(b), needs(a) || needs(b));
    if (needs(out)) {
      bind(out, [a, b](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g * t.val(b).transpose());
        t.accumulate(b.id, t.val(a).transpose() * g);
      });
    }
    return out;
  }

  Var transpose(Var a) {
    Var out = push(val(a).transpose(), needs(a));
    if (needs(out)) {
      bind(out, [a](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g.transpose());
      });
    }
    return out;
  }

  // ---- elementwise transcendentals ----

  Var exp_(Var a) {
    Var out = push(val(a).array().exp().matrix(), needs(a));
    if (needs(out)) {
      bind(out, [a, out](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g.cwiseProduct(t.val(out)));
      });
    }
    return out;
  }

  Var log_(Var a) {
    Var out = push(val(a).array().log().matrix(), needs(a));
    if (needs(out)) {
      bind(out, [a](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g.cwiseQuotient(t.val(a)));
      });
    }
    return out;
  }

  Var sqrt_(Var a) {
    Var out = push(val(a).array().sqrt().matrix(), needs(a));
    if (needs(out)) {
      bind(out, [a, out](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id,
                     (g.array() * 0.5 / t.val(out).array()).matrix());
      });
    }
    return out;
  }

  Var inv_(Var a) {
    Var out = push(val(a).cwiseInverse(), needs(a));
    if (needs(out)) {
      bind(out, [a, out](Tape& t, const Eigen::MatrixXd& g) {
        const auto& o = t.val(out);
        t.accumulate(a.id, (-g.array() * o.array() * o.array()).matrix());
      });
    }
    return out;
  }

  // Elementwise max with a constant floor; subgradient 0 on the floor.
  Var max_floor(Var a, double floor) {
    Var out = push(val(a).cwiseMax(floor), needs(a));
    if (needs(out)) {
      bind(out, [a, floor](Tape& t, const Eigen::MatrixXd& g) {
        const auto& av = t.val(a);
        t.accumulate(
            a.id,
            (g.array() * (av.array() > floor).cast<double>()).matrix());
      });
    }
    return out;
  }

  // ---- reductions and broadcasts ----

  Var rowsum(Var a) {
    Var out = push(val(a).rowwise().sum(), needs(a));
    if (needs(out)) {
      const int cols = static_cast<int>(val(a).cols());
      bind(out, [a, cols](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g * Eigen::MatrixXd::Ones(1, cols));
      });
    }
    return out;
  }

  Var colsum(Var a) {
    Var out = push(val(a).colwise().sum(), needs(a));
    if (needs(out)) {
      const int rows = static_cast<int>(val(a).rows());
      bind(out, [a, rows](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, Eigen::MatrixXd::Ones(rows, 1) * g);
      });
    }
    return out;
  }

  Var sum(Var a) {
    Eigen::MatrixXd s(1, 1);
    s(0, 0) = val(a).sum();
    Var out = push(std::move(s), needs(a));
    if (needs(out)) {
      bind(out, [a](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id,
                     Eigen::MatrixXd::Constant(t.val(a).rows(),
                                               t.val(a).cols(), g(0, 0)));
      });
    }
    return out;
  }

  Var broadcast_col(Var v, int cols) {
    if (val(v).cols() != 1) throw DimensionMismatch("broadcast_col wants n x 1");
    Var out = push(val(v) * Eigen::MatrixXd::Ones(1, cols), needs(v));
    if (needs(out)) {
      bind(out, [v](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(v.id, g.rowwise().sum());
      });
    }
    return out;
  }

  Var broadcast_row(Var r, int rows) {
    if (val(r).rows() != 1) throw DimensionMismatch("broadcast_row wants 1 x m");
    Var out = push(Eigen::MatrixXd::Ones(rows, 1) * val(r), needs(r));
    if (needs(out)) {
      bind(out, [r](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(r.id, g.colwise().sum());
      });
    }
    return out;
  }

  Var diag_vec(Var v) {
    if (val(v).cols() != 1) throw DimensionMismatch("diag_vec wants m x 1");
    Var out = push(Eigen::MatrixXd(val(v).col(0).asDiagonal()), needs(v));
    if (needs(out)) {
      bind(out, [v](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(v.id, g.diagonal());
      });
    }
    return out;
  }

  Var trace_(Var a) {
    if (val(a).rows() != val(a).cols())
      throw DimensionMismatch("trace of a non-square matrix");
    Eigen::MatrixXd s(1, 1);
    s(0, 0) = val(a).trace();
    Var out = push(std::move(s), needs(a));
    if (needs(out)) {
      const int n = static_cast<int>(val(a).rows());
      bind(out, [a, n](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id, g(0, 0) * Eigen::MatrixXd::Identity(n, n));
      });
    }
    return out;
  }

  Var dot(Var a, Var b) { return sum(cmul(a, b)); }

  // ---- symmetric positive definite primitives ----

  // X = A^-1 B for symmetric PD A (caller adds jitter beforehand).
  // Adjoints: B_bar += A^-1 G,  A_bar += -(A^-1 G) X^T.
  Var psd_solve(Var a, Var b) {
    if (val(a).rows() != val(a).cols() || val(a).rows() != val(b).rows())
      throw DimensionMismatch("psd_solve shape mismatch");
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(val(a));
    if (llt->info() != Eigen::Success)
      throw NotPositiveDefinite("psd_solve: factorization failed");
    Var out = push(llt->solve(val(b)), needs(a) || needs(b));
    if (needs(out)) {
      bind(out, [a, b, out, llt](Tape& t, const Eigen::MatrixXd& g) {
        const Eigen::MatrixXd W = llt->solve(g);
        t.accumulate(b.id, W);
        t.accumulate(a.id, -W * t.val(out).transpose());
      });
    }
    return out;
  }

  // log det A for symmetric PD A; adjoint A_bar += g * A^-1.
  Var psd_logdet(Var a) {
    if (val(a).rows() != val(a).cols())
      throw DimensionMismatch("psd_logdet of a non-square matrix");
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(val(a));
    if (llt->info() != Eigen::Success)
      throw NotPositiveDefinite("psd_logdet: factorization failed");
    Eigen::MatrixXd s(1, 1);
    s(0, 0) = log_det_from_llt(*llt);
    Var out = push(std::move(s), needs(a));
    if (needs(out)) {
      const int n = static_cast<int>(val(a).rows());
      bind(out, [a, llt, n](Tape& t, const Eigen::MatrixXd& g) {
        t.accumulate(a.id,
                     g(0, 0) * llt->solve(Eigen::MatrixXd::Identity(n, n)));
      });
    }
    return out;
  }

  // ---- convenience ----

  Var add_scaled_identity(Var a, double c) {
    const int n = static_cast<int>(val(a).rows());
    return add(a, constant(c * Eigen::MatrixXd::Identity(n, n)));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Eigen::MatrixXd&)> backprop;
  };

  bool needs(Var x) const { return nodes_[x.id].needs_grad; }

  Var push(Eigen::MatrixXd v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), {}, needs_grad, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void bind(Var out, std::function<void(Tape&, const Eigen::MatrixXd&)> f) {
    nodes_[out.id].backprop = std::move(f);
  }

  void accumulate(int id, const Eigen::MatrixXd& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw DimensionMismatch(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
};

// RBF kernel matrix as a tape expression, differentiable w.r.t. both input
// blocks and the log hyperparameters. Mirrors kernel_eval.
struct KernelVars {
  Var log_variance;      // 1x1
  Var log_lengthscales;  // d x 1
};

inline Var kernel_matrix(Tape& t, const KernelVars& kv, Var A, Var B) {
  const int n = static_cast<int>(t.val(A).rows());
  const int m = static_cast<int>(t.val(B).rows());
  Var inv_ls = t.exp_(t.scale(kv.log_lengthscales, -1.0));  // d x 1
  Var D = t.diag_vec(inv_ls);
  Var As = t.matmul(A, D);
  Var Bs = t.matmul(B, D);
  Var a2 = t.rowsum(t.cmul(As, As));  // n x 1
  Var b2 = t.rowsum(t.cmul(Bs, Bs));  // m x 1
  Var cross = t.matmul(As, t.transpose(Bs));
  Var sq = t.add(t.add(t.scale(cross, -2.0), t.broadcast_col(a2, m)),
                 t.broadcast_row(t.transpose(b2), n));
  Var sq_clamped = t.max_floor(sq, 0.0);
  Var sigf2 = t.exp_(kv.log_variance);
  return t.scale_by(t.exp_(t.scale(sq_clamped, -0.5)), sigf2);
}

}  // namespace loadfuse::tape
