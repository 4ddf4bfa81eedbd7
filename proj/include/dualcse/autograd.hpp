#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// operations in creation order; backward() replays them in reverse. Trainable
// tensors are Parameters owned outside the tape; ops that read a Parameter
// accumulate into its grad directly.

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dualcse/error.hpp"

namespace dualcse::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  Matrix value;
  Matrix grad;

  explicit Parameter(Matrix v = {}) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
  int id = -1;
};

class Tape {
 public:
  // With record = false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix m) { return push(std::move(m)); }

  const Matrix& value(Var v) const { return nodes_[check(v)].value; }

  // Adds g to the gradient of v. Used to seed backward from external losses.
  void seed(Var v, const Matrix& g) { accumulate(v.id, g); }

  void backward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.grad.size() > 0) n.back();
    }
  }

  // Rows of `table` selected by ids.
  Var embed(Parameter& table, std::span<const int> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] < 0 || ids[t] >= table.value.rows()) throw Error("embedding index out of range");
      out.row(static_cast<Eigen::Index>(t)) = table.value.row(ids[t]);
    }
    Var y = push(std::move(out));
    if (record_) {
      std::vector<int> idx(ids.begin(), ids.end());
      nodes_[y.id].back = [this, y, &table, idx = std::move(idx)] {
        const Matrix& g = nodes_[y.id].grad;
        for (std::size_t t = 0; t < idx.size(); ++t) table.grad.row(idx[t]) += g.row(static_cast<Eigen::Index>(t));
      };
    }
    return y;
  }

  Var add(Var a, Var b) {
    Var y = push(value(a) + value(b));
    if (record_) {
      nodes_[y.id].back = [this, a, b, y] {
        const Matrix g = nodes_[y.id].grad;
        accumulate(a.id, g);
        accumulate(b.id, g);
      };
    }
    return y;
  }

  // x * W + b, with b a 1 x out row broadcast over rows of x.
  Var linear(Var x, Parameter& w, Parameter& b) {
    Matrix out = value(x) * w.value;
    out.rowwise() += b.value.row(0);
    Var y = push(std::move(out));
    if (record_) {
      nodes_[y.id].back = [this, x, y, &w, &b] {
        const Matrix& g = nodes_[y.id].grad;
        w.grad.noalias() += nodes_[x.id].value.transpose() * g;
        b.grad.row(0) += g.colwise().sum();
        accumulate(x.id, g * w.value.transpose());
      };
    }
    return y;
  }

  Var matmul(Var a, Var b) {
    Var y = push(value(a) * value(b));
    if (record_) {
      nodes_[y.id].back = [this, a, b, y] {
        const Matrix& g = nodes_[y.id].grad;
        Matrix ga = g * nodes_[b.id].value.transpose();
        Matrix gb = nodes_[a.id].value.transpose() * g;
        accumulate(a.id, ga);
        accumulate(b.id, gb);
      };
    }
    return y;
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    Var y = push(value(a) * value(b).transpose());
    if (record_) {
      nodes_[y.id].back = [this, a, b, y] {
        const Matrix& g = nodes_[y.id].grad;
        Matrix ga = g * nodes_[b.id].value;
        Matrix gb = g.transpose() * nodes_[a.id].value;
        accumulate(a.id, ga);
        accumulate(b.id, gb);
      };
    }
    return y;
  }

  Var scale(Var a, double s) {
    Var y = push(value(a) * s);
    if (record_) {
      nodes_[y.id].back = [this, a, y, s] { accumulate(a.id, nodes_[y.id].grad * s); };
    }
    return y;
  }

  Var softmax_rows(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).maxCoeff();
      out.row(r) = (x.row(r).array() - m).exp().matrix();
      out.row(r) /= out.row(r).sum();
    }
    Var y = push(std::move(out));
    if (record_) {
      nodes_[y.id].back = [this, a, y] {
        const Matrix& p = nodes_[y.id].value;
        const Matrix& g = nodes_[y.id].grad;
        Matrix ga(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
          const double dot = p.row(r).dot(g.row(r));
          ga.row(r) = (p.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
        accumulate(a.id, ga);
      };
    }
    return y;
  }

  // Row-wise layer normalization with affine gamma/beta (both 1 x d).
  Var layer_norm(Var x, Parameter& gamma, Parameter& beta, double eps = 1e-12) {
    const Matrix& in = value(x);
    const Eigen::Index d = in.cols();
    Matrix xhat(in.rows(), d);
    Eigen::VectorXd inv_std(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      const double mean = in.row(r).mean();
      const double var = (in.row(r).array() - mean).square().mean();
      inv_std(r) = 1.0 / std::sqrt(var + eps);
      xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = xhat;
    out.array().rowwise() *= gamma.value.row(0).array();
    out.rowwise() += beta.value.row(0);
    Var y = push(std::move(out));
    if (record_) {
      nodes_[y.id].back = [this, x, y, &gamma, &beta, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Matrix& g = nodes_[y.id].grad;
        gamma.grad.row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
        beta.grad.row(0) += g.colwise().sum();
        Matrix gx(g.rows(), g.cols());
        const double dd = static_cast<double>(g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const Eigen::ArrayXd gh = (g.row(r).array() * gamma.value.row(0).array()).transpose();
          const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
          const double mean_gh = gh.sum() / dd;
          const double mean_ghx = (gh * xh).sum() / dd;
          gx.row(r) = (inv_std(r) * (gh - mean_gh - xh * mean_ghx)).matrix().transpose();
        }
        accumulate(x.id, gx);
      };
    }
    return y;
  }

  // tanh approximation of GELU.
  Var gelu(Var a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    const Matrix& x = value(a);
    Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))); });
    Var y = push(std::move(out));
    if (record_) {
      nodes_[y.id].back = [this, a, y] {
        const Matrix& in = nodes_[a.id].value;
        Matrix d = in.unaryExpr([](double v) {
          const double u = k * (v + 0.044715 * v * v * v);
          const double t = std::tanh(u);
          return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * v * v);
        });
        accumulate(a.id, (nodes_[y.id].grad.array() * d.array()).matrix());
      };
    }
    return y;
  }

  Var cols(Var a, Eigen::Index start, Eigen::Index n) {
    Var y = push(value(a).middleCols(start, n));
    if (record_) {
      nodes_[y.id].back = [this, a, y, start, n] {
        Node& src = nodes_[a.id];
        ensure_grad(a.id);
        src.grad.middleCols(start, n) += nodes_[y.id].grad;
      };
    }
    return y;
  }

  Var hcat(std::span<const Var> parts) {
    Eigen::Index rows = value(parts.front()).rows(), total = 0;
    for (Var p : parts) total += value(p).cols();
    Matrix out(rows, total);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    Var y = push(std::move(out));
    if (record_) {
      nodes_[y.id].back = [this, y, ps = std::vector<Var>(parts.begin(), parts.end())] {
        Eigen::Index off = 0;
        for (Var p : ps) {
          const Eigen::Index c = nodes_[p.id].value.cols();
          Matrix g = nodes_[y.id].grad.middleCols(off, c);
          accumulate(p.id, g);
          off += c;
        }
      };
    }
    return y;
  }

  Var row(Var a, Eigen::Index r) {
    Var y = push(value(a).row(r));
    if (record_) {
      nodes_[y.id].back = [this, a, y, r] {
        ensure_grad(a.id);
        nodes_[a.id].grad.row(r) += nodes_[y.id].grad.row(0);
      };
    }
    return y;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    std::function<void()> back;
  };

  Var push(Matrix m) {
    nodes_.push_back(Node{std::move(m), Matrix(), {}});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw Error("invalid tape variable");
    return v.id;
  }

  void ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }

  void accumulate(int id, const Matrix& g) {
    ensure_grad(id);
    nodes_[id].grad += g;
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace dualcse::ad
