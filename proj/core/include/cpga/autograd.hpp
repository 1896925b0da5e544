#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cpga/tensor.hpp"

namespace cpga {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order, so backward is a single reverse sweep.
//
// Parameters are registered by reference; backward() overwrites each
// registered parameter's grad buffer (zero if the loss does not reach it).
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Tensor& parameter);

  // Throws InvalidState when `loss` was not recorded on this tape and
  // InvalidArgument when it is not a single element.
  void backward(const Var& loss);

  const Tensor& value(const Var& v) const;
  // Gradient of the last backward() with respect to `v`; zeros if unreached.
  std::vector<double> grad(const Var& v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-implementation interface.
  Var record(std::string_view op, Tensor value, bool requires_grad, Backprop backprop);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  std::span<const double> node_grad(std::size_t id) const { return nodes_[id].grad; }
  // Lazily allocated accumulation buffer for node `id`.
  std::vector<double>& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backprop backprop;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_ids_;
};

// Differentiable primitives. All operands must live on the same tape and be
// rank-2; the only broadcast is a 1×m row applied to every row (add_bias,
// scale_cols).
namespace ag {

Var matmul(const Var& a, const Var& b);     // (n×k)·(k×m)
Var matmul_nt(const Var& a, const Var& b);  // (n×k)·(m×k)ᵀ
Var add_bias(const Var& x, const Var& bias);
Var scale_cols(const Var& x, const Var& scale);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);
Var relu(const Var& x);
Var log(const Var& x);
Var exp(const Var& x);
Var clamp_min(const Var& x, double lo);
Var softmax_rows(const Var& x, double temperature = 1.0);
Var log_softmax_rows(const Var& x, double temperature = 1.0);
Var l2_normalize_rows(const Var& x);
// Embedding lookup: row i of the result is row indices[i] of `table`.
Var gather_rows(const Var& table, std::span<const std::size_t> indices);
// Per-row column gather: result(i, j) = x(i, columns[i * per_row + j]).
Var take(const Var& x, std::span<const std::size_t> columns, std::size_t per_row);
Var row_sum(const Var& x);
Var row_dot(const Var& a, const Var& b);
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace ag
}  // namespace cpga
