#pragma once
// Reverse-mode differentiation over 2-D tensors.
//
// A Tape records every primitive applied to Vars created from it. Each node
// stores its forward value plus an adjoint closure that pushes the node's
// gradient into its inputs. backward() walks the nodes in reverse creation
// order, which is a valid topological order because inputs always precede
// outputs.
//
// Broadcasting is limited to a 1 x m row vector (applied to every row) and a
// 1 x 1 scalar. Ops that need per-row scalars (div_rows) take an n x 1 column
// explicitly.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kgf/tensor.hpp"

namespace kgf {

/// A learnable tensor with its gradient accumulator.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;  // dotted path, unique within a model
  Tensor value;
  Tensor grad;  // same shape as value

  void zero_grad() { grad.fill(0.0); }
};

/// Edge arrays for relational message passing: edge e carries a message from
/// src[e] to dst[e] under relation rel[e].
struct EdgeArrays {
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> rel;
  std::vector<std::int32_t> dst;

  [[nodiscard]] std::size_t size() const { return src.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] Shape shape() const { return value().shape(); }
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Adjoint: given the node id whose gradient is final, add contributions to
  /// the gradients of its inputs.
  using Adjoint = std::function<void(Tape&, std::size_t)>;

  /// With record = false no adjoints are stored and backward() is rejected;
  /// used for evaluation passes.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a Parameter; its gradient lands in p.grad after backward.
  Var param(Parameter& p);

  /// Computes node gradients from a 1 x 1 loss and adds the parameter leaf
  /// gradients into Parameter::grad. Calling it twice without zeroing the
  /// parameters accumulates twice.
  void backward(Var loss);

  /// First half of backward(): node gradients only, parameters untouched.
  void compute_gradients(Var loss);
  /// Second half: add leaf gradients into the bound Parameters.
  void accumulate_parameter_grads() const;

  /// Gradient of a node after compute_gradients; zero tensor if unreached.
  [[nodiscard]] Tensor grad(Var v) const;

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] bool recording() const { return record_; }

  // Primitive-implementation interface.
  Var push(Tensor value, Adjoint adjoint);
  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient buffer of node id, zero-allocated on first access.
  Tensor& grad_ref(std::size_t id);
  [[nodiscard]] bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    Adjoint adjoint;
    Parameter* param = nullptr;
  };

  bool record_;
  std::deque<Node> nodes_;  // deque keeps value references stable across push
};

// ---------------------------------------------------------------------------
// Primitives. Every op checks shapes and throws DimensionError naming itself.

Var matmul(Var a, Var b);
Var transpose(Var a);
/// b is same-shape, a 1 x m row (broadcast over rows) or a 1 x 1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; b may be a broadcast row or scalar as in add.
Var mul(Var a, Var b);
/// Row i of a divided by d(i, 0); d is n x 1.
Var div_rows(Var a, Var d);
Var concat_columns(Var a, Var b);
Var relu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
/// Values clamped into [lo, hi]; gradient passes only strictly inside.
Var clamp(Var a, double lo, double hi);
/// Sum of all entries, 1 x 1.
Var sum(Var a);
/// Column sums, 1 x m (i.e. 1^T A).
Var sum_rows(Var a);
/// Column means, 1 x m.
Var mean_rows(Var a);
/// Row sums, n x 1 (i.e. A 1).
Var sum_cols(Var a);
/// Per-row normalization over the feature dimension with learnable 1 x m gain and bias.
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Each row divided by sqrt(||row||^2 + eps).
Var row_l2_normalize(Var a, double eps = 1e-12);
/// out[i] = a[index[i]].
Var gather_rows(Var a, std::vector<std::size_t> index);
/// out has target_rows rows; out[index[i]] += a[i].
Var scatter_add_rows(std::size_t target_rows, std::vector<std::size_t> index, Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Fused gather -> per-relation product -> scatter_add:
///   out[dst_e] += z[src_e] * rel_vectors[rel_e]   (elementwise)
/// out has z.rows() rows. Equivalent to
///   scatter_add_rows(n, dst, mul(gather_rows(z, src), gather_rows(rel_vectors, rel)))
/// without materializing the |E| x d intermediates.
Var relational_aggregate(Var z, Var rel_vectors, std::shared_ptr<const EdgeArrays> edges);

// ---------------------------------------------------------------------------
// Finite-difference gradient audit.

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double worst_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Per-entry relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
};

/// Compares the tape gradient of closure() against central differences for
/// every entry of every parameter. closure must build a fresh tape each call
/// and return a scalar loss; two consecutive evaluations are compared
/// bit-for-bit first and a mismatch raises DeterminismError.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& closure,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace kgf
