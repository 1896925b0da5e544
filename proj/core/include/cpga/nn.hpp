#pragma once

#include <cstddef>
#include <vector>

#include "cpga/autograd.hpp"
#include "cpga/random.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// y = x·Wᵀ + b with W stored out×in.
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.cols(); }
  std::size_t out_features() const { return weight.rows(); }

  Var forward(Tape& tape, const Var& x);
  // Weights enter the tape as constants and receive no gradient.
  Var forward_frozen(Tape& tape, const Var& x) const;
};

// Fully connected stack with ReLU between layers and a linear output.
class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}; needs at least two entries.
  Mlp(std::vector<std::size_t> dims, Rng& rng);
  explicit Mlp(std::vector<Linear> layers);

  Var forward(Tape& tape, const Var& x);
  Var forward_frozen(Tape& tape, const Var& x) const;
  Tensor apply(const Tensor& x) const;

  std::vector<std::size_t> dims() const;
  std::size_t in_features() const;
  std::size_t out_features() const;
  std::vector<Linear>& layers() noexcept { return layers_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }
  std::vector<Tensor*> parameters();

 private:
  std::vector<Linear> layers_;
};

}  // namespace cpga
