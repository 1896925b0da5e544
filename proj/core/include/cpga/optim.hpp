#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cpga/autograd.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

struct SgdOptions {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// Optimizer state: options plus one velocity buffer per parameter slot.
class SgdState {
 public:
  explicit SgdState(SgdOptions options);

  const SgdOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr);

  // velocity ← momentum·velocity + grad + weight_decay·param
  // param    ← param − lr·velocity
  // Parameters are matched to buffers by position; a shape change at a slot
  // throws InvalidArgument.
  void step(std::span<Tensor* const> params);

  const std::vector<double>& velocity(std::size_t slot) const { return velocity_.at(slot); }

 private:
  SgdOptions options_;
  std::vector<std::vector<double>> velocity_;
  std::vector<std::vector<std::size_t>> shapes_;
};

// Single-tensor update with an explicit gradient.
void sgd_step(Tensor& param, std::span<const double> grad, std::vector<double>& velocity,
              const SgdOptions& options);

// Scalar-valued function of one tensor, built on the given tape.
using ScalarFunction = std::function<Var(Tape&, const Var&)>;

// Max over coordinates of |analytic − central difference| / max(1, |central difference|).
// Throws NumericError if f evaluates to a non-finite value.
double grad_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-5);

}  // namespace cpga
