#pragma once

// Reverse-mode differentiation over dense 2-D arrays.
//
// A Tape records every operation as a node in creation order, which is
// already a topological order of the graph. Var is a cheap handle
// (tape pointer + node index). Nodes built only from constants are marked
// as not requiring gradients and are skipped during backward.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "exarnn/array.hpp"
#include "exarnn/errors.hpp"

namespace exarnn {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  AddColBias,  // a (r x c) + b (r x 1) broadcast over columns
  Sub,
  Mul,
  Tanh,
  Sigmoid,
  Scale,
  Sum,
  Reshape,
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Array& value() const;
  const Array& adjoint() const;
  Shape shape() const { return value().shape(); }

 private:
  Tape* tape_{nullptr};
  std::size_t id_{0};
};

class Tape {
 public:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Node {
    Array value;
    Array adjoint;
    Op op{Op::Leaf};
    bool requires_grad{false};
    std::size_t lhs{kNone};
    std::size_t rhs{kNone};
    double scalar{0.0};
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input (a parameter or anything we want an adjoint for).
  Var variable(Array value) { return push(std::move(value), Op::Leaf, true); }
  // Data: no adjoint is propagated into it.
  Var constant(Array value) { return push(std::move(value), Op::Leaf, false); }

  Var record(Array value, Op op, std::size_t lhs, std::size_t rhs = kNone, double scalar = 0.0) {
    bool rg = nodes_[lhs].requires_grad || (rhs != kNone && nodes_[rhs].requires_grad);
    Var v = push(std::move(value), op, rg);
    Node& n = nodes_.back();
    n.lhs = lhs;
    n.rhs = rhs;
    n.scalar = scalar;
    return v;
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  const Array& value(Var v) const { return nodes_[v.id()].value; }
  const Array& adjoint(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.adjoint.shape() != n.value.shape()) {
      throw ContractError("adjoint requested for a node that received none");
    }
    return n.adjoint;
  }
  std::size_t size() const { return nodes_.size(); }

  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Computes d(root)/d(node) for every node that requires gradients. Adjoints
  // from a previous call are discarded first.
  void backward(Var root) {
    if (root.tape() != this) throw ContractError("backward: root belongs to another tape");
    const Node& r = nodes_[root.id()];
    if (r.value.shape() != Shape{1, 1}) {
      throw ContractError("backward: root must be 1x1, got " + to_string(r.value.shape()));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) {
        if (n.adjoint.shape() != n.value.shape()) {
          n.adjoint = Array(n.value.rows(), n.value.cols());
        } else {
          n.adjoint.fill(0.0);
        }
      } else {
        n.adjoint = Array();
      }
    }
    if (!r.requires_grad) return;
    nodes_[root.id()].adjoint[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) propagate(i);
  }

 private:
  Var push(Array value, Op op, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  bool wants(std::size_t id) const { return id != kNone && nodes_[id].requires_grad; }

  void propagate(std::size_t i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.op == Op::Leaf) return;
    const Array& g = n.adjoint;
    const std::size_t m = g.size();
    switch (n.op) {
      case Op::MatMul: {
        const Array& a = nodes_[n.lhs].value;
        const Array& b = nodes_[n.rhs].value;
        const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
        if (wants(n.lhs)) {
          Array& da = nodes_[n.lhs].adjoint;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < inner; ++k) {
              double acc = 0.0;
              for (std::size_t c = 0; c < cols; ++c) acc += g(r, c) * b(k, c);
              da(r, k) += acc;
            }
        }
        if (wants(n.rhs)) {
          Array& db = nodes_[n.rhs].adjoint;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < inner; ++k) {
              const double ark = a(r, k);
              for (std::size_t c = 0; c < cols; ++c) db(k, c) += ark * g(r, c);
            }
        }
        break;
      }
      case Op::Add:
        if (wants(n.lhs)) accumulate(nodes_[n.lhs].adjoint, g, 1.0);
        if (wants(n.rhs)) accumulate(nodes_[n.rhs].adjoint, g, 1.0);
        break;
      case Op::AddColBias:
        if (wants(n.lhs)) accumulate(nodes_[n.lhs].adjoint, g, 1.0);
        if (wants(n.rhs)) {
          Array& db = nodes_[n.rhs].adjoint;
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) db[r] += g(r, c);
        }
        break;
      case Op::Sub:
        if (wants(n.lhs)) accumulate(nodes_[n.lhs].adjoint, g, 1.0);
        if (wants(n.rhs)) accumulate(nodes_[n.rhs].adjoint, g, -1.0);
        break;
      case Op::Mul: {
        const Array& a = nodes_[n.lhs].value;
        const Array& b = nodes_[n.rhs].value;
        if (wants(n.lhs)) {
          Array& da = nodes_[n.lhs].adjoint;
          for (std::size_t k = 0; k < m; ++k) da[k] += g[k] * b[k];
        }
        if (wants(n.rhs)) {
          Array& db = nodes_[n.rhs].adjoint;
          for (std::size_t k = 0; k < m; ++k) db[k] += g[k] * a[k];
        }
        break;
      }
      case Op::Tanh: {
        Array& da = nodes_[n.lhs].adjoint;
        for (std::size_t k = 0; k < m; ++k) da[k] += g[k] * (1.0 - n.value[k] * n.value[k]);
        break;
      }
      case Op::Sigmoid: {
        Array& da = nodes_[n.lhs].adjoint;
        for (std::size_t k = 0; k < m; ++k) da[k] += g[k] * n.value[k] * (1.0 - n.value[k]);
        break;
      }
      case Op::Scale:
        accumulate(nodes_[n.lhs].adjoint, g, n.scalar);
        break;
      case Op::Sum: {
        Array& da = nodes_[n.lhs].adjoint;
        for (std::size_t k = 0; k < da.size(); ++k) da[k] += g[0];
        break;
      }
      case Op::Reshape:
        accumulate(nodes_[n.lhs].adjoint, g, 1.0);
        break;
      case Op::Leaf:
        break;
    }
  }

  static void accumulate(Array& dst, const Array& g, double factor) {
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += factor * g[k];
  }

  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape_->value(*this); }
inline const Array& Var::adjoint() const { return tape_->adjoint(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands belong to different tapes");
  }
  return *a.tape();
}

inline void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename F>
Var unary(Var a, Op op, F f, double scalar = 0.0) {
  const Array& av = a.value();
  Array out(av.rows(), av.cols());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  return a.tape()->record(std::move(out), op, a.id(), Tape::kNone, scalar);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  return t.record(matmul(a.value(), b.value()), Op::MatMul, a.id(), b.id());
}

// Elementwise sum. `b` may also be a column (a.rows() x 1) that is broadcast
// across every column of `a`; that is the only broadcast supported.
inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.shape() == bv.shape()) {
    Array out = av;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
    return t.record(std::move(out), Op::Add, a.id(), b.id());
  }
  if (bv.cols() == 1 && bv.rows() == av.rows()) {
    Array out = av;
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) += bv[r];
    return t.record(std::move(out), Op::AddColBias, a.id(), b.id());
  }
  throw DimensionError("add: shape mismatch " + to_string(av.shape()) + " vs " +
                       to_string(bv.shape()));
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  return t.record(std::move(out), Op::Sub, a.id(), b.id());
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("mul", a, b);
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  return t.record(std::move(out), Op::Mul, a.id(), b.id());
}

inline Var tanh(Var a) {
  return detail::unary(a, Op::Tanh, [](double x) { return std::tanh(x); });
}

inline Var sigmoid(Var a) {
  return detail::unary(a, Op::Sigmoid, [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, Op::Scale, [s](double x) { return s * x; }, s);
}

inline Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().flat()) acc += v;
  return a.tape()->record(Array::scalar(acc), Op::Sum, a.id());
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  return a.tape()->record(a.value().reshaped(rows, cols), Op::Reshape, a.id());
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace exarnn
