#include "cpga/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cpga/errors.hpp"

namespace cpga {

namespace {

void validate(const SgdOptions& o) {
  if (!(o.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) throw InvalidArgument("momentum must be in [0,1)");
  if (!(o.weight_decay >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
}

}  // namespace

SgdState::SgdState(SgdOptions options) : options_(options) { validate(options_); }

void SgdState::set_learning_rate(double lr) {
  SgdOptions o = options_;
  o.learning_rate = lr;
  validate(o);
  options_ = o;
}

void SgdState::step(std::span<Tensor* const> params) {
  if (velocity_.size() < params.size()) {
    velocity_.resize(params.size());
    shapes_.resize(params.size());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (velocity_[i].empty()) {
      velocity_[i].assign(p.numel(), 0.0);
      shapes_[i] = p.shape();
    } else if (shapes_[i] != p.shape()) {
      throw InvalidArgument("sgd: parameter " + std::to_string(i) + " changed shape to " +
                            p.shape_string());
    }
    if (!p.has_grad()) p.enable_grad();
    sgd_step(p, p.grad(), velocity_[i], options_);
  }
}

void sgd_step(Tensor& param, std::span<const double> grad, std::vector<double>& velocity,
              const SgdOptions& options) {
  validate(options);
  if (grad.size() != param.numel() || velocity.size() != param.numel()) {
    throw InvalidArgument("sgd: gradient/velocity size does not match parameter " +
                          param.shape_string());
  }
  auto w = param.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    velocity[i] = options.momentum * velocity[i] + grad[i] + options.weight_decay * w[i];
    w[i] -= options.learning_rate * velocity[i];
  }
}

double grad_check(const ScalarFunction& f, const Tensor& x, double eps) {
  auto evaluate = [&f](const Tensor& at) {
    Tape tape;
    Tensor copy = at;
    const double v = f(tape, tape.constant(std::move(copy))).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
  };

  Tensor param = x;
  Tape tape;
  const Var loss = f(tape, tape.param(param));
  if (!std::isfinite(loss.value().item())) {
    throw NumericError("grad_check: function value is not finite");
  }
  tape.backward(loss);
  const std::vector<double> analytic(param.grad().begin(), param.grad().end());

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = evaluate(probe);
    probe[i] = orig - eps;
    const double down = evaluate(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace cpga
