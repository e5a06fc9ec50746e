#pragma once

// Tape-based reverse-mode differentiation over dense Tensors.
//
// A Tape records every operation in creation order, which is a topological
// order of the computation DAG. backward() walks the tape once in reverse and
// accumulates gradients into every node that depends on a leaf. Tapes are
// single-threaded; independent tapes may live on different threads.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fedsheaf/kernels.hpp"
#include "fedsheaf/tensor.hpp"

namespace fedsheaf::ad {

class Tape;

/// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& upstream, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input; receives a gradient after backward().
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);

  /// Appends an operation node. `backward` may be empty for ops without a
  /// derivative. The value is checked for NaN/Inf.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a scalar root. Throws ShapeError for non-scalar roots.
  void backward(Var loss);

  /// Gradient of the last backward() root with respect to `v`. Nodes not on
  /// any path to the root get a zero tensor of their own shape.
  Tensor grad(Var v) const;

  /// Adds `g` into the gradient slot of node `id` (used by backward closures).
  void accumulate(std::size_t id, const Tensor& g);

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Linear algebra
Var matmul(Var a, Var b);
Var transpose(Var a);
Var spmm(std::shared_ptr<const kernels::CsrMatrix> a, Var x);

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var elu(Var a);
Var relu(Var a);
Var tanh(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

// Row-structured
Var row_softmax(Var a);
/// a[m x n] + bias[n] broadcast over rows.
Var add_row_bias(Var a, Var bias);
/// Mean over rows: [m x n] -> [n].
Var mean_rows(Var a);
Var gather_rows(Var a, std::vector<std::size_t> rows);
Var hconcat(Var a, Var b);
Var reshape(Var a, std::vector<std::size_t> shape);
/// Left-multiplies each consecutive d-row block of x by w[d x d], i.e. the
/// action of (I kron w) on x without forming the Kronecker product.
Var block_left_mul(Var w, Var x);

// Reductions
Var sum(Var a);
/// Frobenius inner product with a constant tensor; gradient is exactly `c`.
Var inner_const(Var a, const Tensor& c);
/// Mean negative log-likelihood of softmax(logits) over the selected rows.
Var masked_cross_entropy(Var logits, std::vector<int> labels, std::vector<std::size_t> rows);

}  // namespace fedsheaf::ad
