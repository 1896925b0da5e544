#include "cpga/nn.hpp"

#include <cmath>

#include "cpga/errors.hpp"

namespace cpga {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(Tensor::zeros(out, in)), bias(Tensor::zeros(1, out)) {
  if (in == 0 || out == 0) throw InvalidArgument("linear layer dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : weight.data()) w = rng.uniform(-bound, bound);
  for (double& b : bias.data()) b = rng.uniform(-bound, bound);
}

namespace {

void check_input(const Linear& l, const Var& x) {
  if (x.cols() != l.in_features()) {
    throw InvalidArgument("linear layer expects " + std::to_string(l.in_features()) +
                          " input columns, got " + std::to_string(x.cols()));
  }
}

}  // namespace

Var Linear::forward(Tape& tape, const Var& x) {
  check_input(*this, x);
  return ag::add_bias(ag::matmul_nt(x, tape.param(weight)), tape.param(bias));
}

Var Linear::forward_frozen(Tape& tape, const Var& x) const {
  check_input(*this, x);
  return ag::add_bias(ag::matmul_nt(x, tape.constant(weight)), tape.constant(bias));
}

Mlp::Mlp(std::vector<std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw InvalidArgument("an MLP needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1], rng);
}

Mlp::Mlp(std::vector<Linear> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("an MLP needs at least one layer");
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].out_features() != layers_[i + 1].in_features()) {
      throw InvalidArgument("MLP layer dimensions do not chain");
    }
  }
}

Var Mlp::forward(Tape& tape, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h);
    if (i + 1 < layers_.size()) h = ag::relu(h);
  }
  return h;
}

Var Mlp::forward_frozen(Tape& tape, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward_frozen(tape, h);
    if (i + 1 < layers_.size()) h = ag::relu(h);
  }
  return h;
}

Tensor Mlp::apply(const Tensor& x) const {
  Tape tape;
  return forward_frozen(tape, tape.constant(x)).value();
}

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> d;
  if (layers_.empty()) return d;
  d.push_back(layers_.front().in_features());
  for (const Linear& l : layers_) d.push_back(l.out_features());
  return d;
}

std::size_t Mlp::in_features() const { return layers_.front().in_features(); }
std::size_t Mlp::out_features() const { return layers_.back().out_features(); }

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> p;
  for (Linear& l : layers_) {
    p.push_back(&l.weight);
    p.push_back(&l.bias);
  }
  return p;
}

}  // namespace cpga
