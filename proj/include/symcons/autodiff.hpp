#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "symcons/tensor.hpp"

namespace symcons {

class Rng;
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records differentiable operations in execution order, which is a
/// topological order of the computation graph. One tape belongs to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// grad_enabled=false records values only (evaluation).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  /// Borrows a parameter tensor. backward() accumulates into param.grad when
  /// param.requires_grad is set. The tensor must outlive the tape.
  Var parameter(Tensor& param);
  /// Read-only binding; no gradient flows back to the tensor.
  Var parameter(const Tensor& param);

  /// Adds a node computed outside the tape. backward receives this node's id;
  /// it reads grad(self) and accumulates into the grads of its inputs.
  Var record(std::span<const Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  /// Gradient buffer of a node, zero-initialised on first access.
  std::span<double> grad(std::size_t id);
  bool has_grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root seeded with 1.
  void backward(Var root);
  /// Reverse sweep from any root seeded with an upstream gradient.
  void backward(Var root, std::span<const double> seed);

 private:
  struct Node {
    Tensor owned;
    const Tensor* param = nullptr;
    Tensor* grad_sink = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// ---------------------------------------------------------------------------
// Primitives. Shapes follow row-major conventions; "rows" means the product of
// all leading dimensions and "last dim" the trailing one.

/// [M,K]x[K,N], [G,M,K]x[K,N] (shared right operand) or [G,M,K]x[G,K,N].
/// With transpose_b the right operand is given as [N,K] / [G,N,K].
Var matmul(Var a, Var b, bool transpose_b = false);

/// Elementwise sum of equal shapes, or a rank-1 b broadcast over the rows of a.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);

/// Rows of a [V,D] table picked by index, giving [n,D].
Var gather_rows(Var table, std::vector<std::size_t> indices);

/// Softmax over the last dim with max subtraction. Throws NumericalError on NaN/Inf.
Var softmax(Var a);

/// (x - mean) / sqrt(var + eps) * gain + bias over the last dim, population variance.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var gelu(Var a);
Var relu(Var a);

/// Inverted dropout; the mask is drawn from rng. rate == 0 returns a unchanged.
Var dropout(Var a, double rate, Rng& rng);

Var concat_last(std::span<const Var> parts);
Var slice_last(Var a, std::size_t begin, std::size_t end);
/// Rows [begin, end) where a row is a last-dim slice of a rank-2 view.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);

/// softmax(q k^T / sqrt(d) + bias) v for q, k, v of shape [G, L, d]. key_mask
/// has G*L entries (or L, shared by all groups); a 0 marks a padded key, which
/// receives an additive bias of -1e9.
Var scaled_dot_attention(Var q, Var k, Var v, std::span<const int> key_mask);

}  // namespace symcons
