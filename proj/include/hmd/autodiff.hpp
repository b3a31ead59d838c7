#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every operation of one forward pass. Var is a lightweight
// handle (tape pointer + node index) into that record. Tapes are confined to
// a single thread and discarded after backward; parameter Tensors are copied
// onto the tape as leaves, so a parameter snapshot can be shared freely.
//
// No broadcasting anywhere: binary ops demand equal shapes, and the few ops
// that combine a matrix with a vector (add_rows, channel_projection bias)
// say so in their names and signatures.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "hmd/tensor.hpp"

namespace hmd::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }

  /// Reference is invalidated by the next operation recorded on the tape.
  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t size() const;
  /// Value of a single-element tensor.
  double item() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  /// Propagates the gradient of node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked iff `t.requires_grad()`.
  Var leaf(Tensor t);
  Var parameter(Tensor t);
  Var constant(Tensor t);

  /// Records an operation output. The backward function is kept only when
  /// at least one input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Zeroes all gradients, seeds d(root)/d(root) = 1 and replays the tape
  /// in reverse order. May be called repeatedly.
  void backward(Var root);

  std::span<const double> grad(Var v) const;
  Tensor grad_tensor(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Access used by backward functions.
  const Tensor& value(std::size_t i) const { return nodes_[i].value; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  std::span<double> grad_mut(std::size_t i) { return nodes_[i].grad; }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn backward);
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

/// Per-row linear map across channels: out[i] = x[i]·W (+ b).
/// x is a vector (q) or a matrix (m×q); W is q×n; b is n.
Var channel_projection(Var x, Var W);
Var channel_projection(Var x, Var W, Var b);

/// Per-row map with a transposed weight: out[i] = x[i]·Wᵀ (+ b), W is n×q.
Var linear(Var x, Var W);
Var linear(Var x, Var W, Var b);

/// out[i] = Σ_j kernel[j] · signal[(i − j) mod n].
Var circular_conv(Var kernel, Var signal);

/// Softmax of a vector, computed with max-subtraction.
Var softmax(Var x);

Var tanh(Var x);
Var sigmoid(Var x);
/// relu'(0) is taken as 0.
Var relu(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);

/// Concatenation along the last (channel) axis; leading extents must agree.
Var concat(Var a, Var b);

/// Sum / mean of all entries, returned as a scalar.
Var sum(Var x);
Var mean(Var x);

/// Column-wise mean of an m×n matrix, returned as an n-vector.
Var mean_rows(Var x);
/// Adds the n-vector v to every row of the m×n matrix x.
Var add_rows(Var x, Var v);
/// Stacks k equal-length vectors into a k×n matrix.
Var stack(std::span<const Var> rows);
/// Row i of a matrix, as a vector.
Var row(Var x, std::size_t i);
Var reshape(Var x, Shape shape);
/// Contiguous slice [offset, offset + length) of a vector.
Var slice(Var x, std::size_t offset, std::size_t length);

/// −log(max(p[target], 1e−12)) for a probability vector p.
Var cross_entropy(Var probabilities, std::size_t target);

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace hmd::ad
