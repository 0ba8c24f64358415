// Minimal reverse-mode differentiation over dense matrices.
//
// A Var is a handle to a node of a dynamically built tape. Ops record a
// closure that pushes the node's gradient into its inputs; Var::backward()
// walks the tape in reverse topological order. Nodes that do not depend on any
// parameter carry no closure and no gradient storage.
#pragma once

#include "mdgmix/common.hpp"

#include <functional>
#include <memory>
#include <unordered_set>

namespace mdgmix::ad {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value) { return Var(std::move(value), false); }
  static Var parameter(Matrix value) { return Var(std::move(value), true); }

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero(node_->value.rows(), node_->value.cols());
  }

  /// Back-propagates from this 1x1 node. Call once per built tape.
  void backward() const {
    if (rows() != 1 || cols() != 1) throw UsageError("backward() needs a scalar root");
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward) (*it)->backward(**it);
  }

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Internal: builds an op node. `fn` receives the finished node.
  static Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    Var out;
    out.node_ = std::make_shared<Node>();
    out.node_->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      out.node_->grad = Matrix::Zero(out.node_->value.rows(), out.node_->value.cols());
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
      out.node_->backward = std::move(fn);
    }
    return out;
  }

 private:
  Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
  }

  std::shared_ptr<Node> node_;
};

namespace detail {
inline void accumulate(Node& input, const Matrix& g) {
  if (input.requires_grad) input.grad += g;
}
inline void check_shape(bool ok, const char* op) {
  if (!ok) throw DimensionError(std::string(op) + ": shape mismatch");
}
}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  detail::check_shape(a.cols() == b.rows(), "matmul");
  return Var::make(a.value() * b.value(), {a, b}, [](Node& n) {
    Node& x = *n.inputs[0];
    Node& y = *n.inputs[1];
    if (x.requires_grad) x.grad.noalias() += n.grad * y.value.transpose();
    if (y.requires_grad) y.grad.noalias() += x.value.transpose() * n.grad;
  });
}

/// Constant sparse matrix times a Var.
inline Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& x) {
  detail::check_shape(s->cols() == x.rows(), "spmm");
  Matrix value = (*s) * x.value();
  return Var::make(std::move(value), {x}, [s](Node& n) {
    Node& in = *n.inputs[0];
    in.grad.noalias() += s->transpose() * n.grad;
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  return Var::make(a.value() + b.value(), {a, b}, [](Node& n) {
    detail::accumulate(*n.inputs[0], n.grad);
    detail::accumulate(*n.inputs[1], n.grad);
  });
}

inline Var scale(const Var& a, double c) {
  return Var::make(a.value() * c, {a}, [c](Node& n) { n.inputs[0]->grad += c * n.grad; });
}

inline Var relu(const Var& a) {
  Matrix value = a.value().cwiseMax(0.0);
  return Var::make(std::move(value), {a}, [](Node& n) {
    Node& in = *n.inputs[0];
    in.grad.array() += (in.value.array() > 0.0).cast<double>() * n.grad.array();
  });
}

/// x (n x c) + b (1 x c) broadcast over rows.
inline Var add_row(const Var& x, const Var& b) {
  detail::check_shape(b.rows() == 1 && b.cols() == x.cols(), "add_row");
  Matrix value = x.value().rowwise() + b.value().row(0);
  return Var::make(std::move(value), {x, b}, [](Node& n) {
    detail::accumulate(*n.inputs[0], n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->grad += n.grad.colwise().sum();
  });
}

/// x (n x c) multiplied elementwise by p (1 x c) on every row.
inline Var mul_row(const Var& x, const Var& p) {
  detail::check_shape(p.rows() == 1 && p.cols() == x.cols(), "mul_row");
  Matrix value = x.value().array().rowwise() * p.value().row(0).array();
  return Var::make(std::move(value), {x, p}, [](Node& n) {
    Node& xin = *n.inputs[0];
    Node& pin = *n.inputs[1];
    if (xin.requires_grad) xin.grad.array() += n.grad.array().rowwise() * pin.value.row(0).array();
    if (pin.requires_grad) pin.grad += (n.grad.array() * xin.value.array()).colwise().sum().matrix();
  });
}

/// Row i scaled by the constant factors(i); no gradient into the factors.
inline Var scale_rows(const Var& x, const Vector& factors) {
  detail::check_shape(factors.size() == x.rows(), "scale_rows");
  Matrix value = factors.asDiagonal() * x.value();
  return Var::make(std::move(value), {x}, [factors](Node& n) {
    n.inputs[0]->grad += factors.asDiagonal() * n.grad;
  });
}

/// Gradient reversal: identity forward, gradient times -beta backward.
inline Var grl(const Var& x, double beta = 1.0) {
  return Var::make(x.value(), {x}, [beta](Node& n) { n.inputs[0]->grad += -beta * n.grad; });
}

/// Column means: (n x c) -> (1 x c).
inline Var mean_rows(const Var& x) {
  detail::check_shape(x.rows() >= 1, "mean_rows");
  const double inv = 1.0 / static_cast<double>(x.rows());
  return Var::make(x.value().colwise().mean(), {x}, [inv](Node& n) {
    n.inputs[0]->grad.rowwise() += inv * n.grad.row(0);
  });
}

inline Var softmax_rows(const Var& x) {
  Matrix value = x.value();
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    const double mx = value.row(i).maxCoeff();
    value.row(i) = (value.row(i).array() - mx).exp();
    value.row(i) /= value.row(i).sum();
  }
  return Var::make(value, {x}, [](Node& n) {
    const Matrix& p = n.value;
    const Vector dot = (n.grad.array() * p.array()).rowwise().sum();
    n.inputs[0]->grad.array() += p.array() * (n.grad.colwise() - dot).array();
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::check_shape(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Matrix value(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    value.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return Var::make(std::move(value), parts, [](Node& n) {
    Eigen::Index off = 0;
    for (auto& in : n.inputs) {
      const Eigen::Index rr = in->value.rows();
      if (in->requires_grad) in->grad += n.grad.middleRows(off, rr);
      off += rr;
    }
  });
}

/// Pairwise cosine similarity of the rows of a (n x h) and b (c x h) -> n x c.
/// Rows with zero norm give similarity 0 and no gradient.
inline Var cosine_matrix(const Var& a, const Var& b) {
  detail::check_shape(a.cols() == b.cols(), "cosine_matrix");
  const Vector na = a.value().rowwise().norm();
  const Vector nb = b.value().rowwise().norm();
  Matrix dots = a.value() * b.value().transpose();
  Matrix sim = Matrix::Zero(dots.rows(), dots.cols());
  for (Eigen::Index i = 0; i < sim.rows(); ++i)
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
      if (na(i) > 0 && nb(j) > 0) sim(i, j) = dots(i, j) / (na(i) * nb(j));
  return Var::make(sim, {a, b}, [na, nb](Node& n) {
    Node& ain = *n.inputs[0];
    Node& bin = *n.inputs[1];
    const Matrix& s = n.value;
    Matrix ga = Matrix::Zero(ain.value.rows(), ain.value.cols());
    Matrix gb = Matrix::Zero(bin.value.rows(), bin.value.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      if (na(i) == 0) continue;
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        if (nb(j) == 0) continue;
        const double g = n.grad(i, j);
        if (g == 0.0) continue;
        const double inv = 1.0 / (na(i) * nb(j));
        ga.row(i) += g * (bin.value.row(j) * inv - s(i, j) * ain.value.row(i) / (na(i) * na(i)));
        gb.row(j) += g * (ain.value.row(i) * inv - s(i, j) * bin.value.row(j) / (nb(j) * nb(j)));
      }
    }
    if (ain.requires_grad) ain.grad += ga;
    if (bin.requires_grad) bin.grad += gb;
  });
}

/// Sum over rows of -log softmax(logits)[label]. Labels index columns.
inline Var cross_entropy_sum(const Var& logits, const std::vector<int>& labels) {
  detail::check_shape(static_cast<std::size_t>(logits.rows()) == labels.size(), "cross_entropy_sum");
  Matrix probs = logits.value();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double mx = probs.row(i).maxCoeff();
    probs.row(i) = (probs.row(i).array() - mx).exp();
    const double z = probs.row(i).sum();
    probs.row(i) /= z;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) throw IndexError("cross_entropy_sum: label out of range");
    loss -= (logits.value()(i, y) - mx) - std::log(z);
  }
  return Var::make(Matrix::Constant(1, 1, loss), {logits}, [probs, labels](Node& n) {
    Matrix g = probs;
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    n.inputs[0]->grad += n.grad(0, 0) * g;
  });
}

}  // namespace mdgmix::ad
