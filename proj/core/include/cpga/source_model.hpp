#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cpga/autograd.hpp"
#include "cpga/domains.hpp"
#include "cpga/nn.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// Source feature extractor: MLP d_in → hidden... → d_f, linear output.
using FeatureExtractor = Mlp;

// Logits g_k · (v̂_k · q) with v̂_k = v_k / ‖v_k‖. The normalization is part of
// the forward pass, so the effective directions are unit-norm after any update.
class WeightNormClassifier {
 public:
  WeightNormClassifier() = default;
  WeightNormClassifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng);
  WeightNormClassifier(Tensor direction, Tensor scale);

  std::size_t num_classes() const { return direction_.rows(); }
  std::size_t feature_dim() const { return direction_.cols(); }

  Var logits(Tape& tape, const Var& features);
  Var logits_frozen(Tape& tape, const Var& features) const;

  // Row-wise unit directions v̂ (K×d_f).
  Tensor effective_directions() const;

  Tensor& direction() noexcept { return direction_; }
  const Tensor& direction() const noexcept { return direction_; }
  Tensor& scale() noexcept { return scale_; }
  const Tensor& scale() const noexcept { return scale_; }
  std::vector<Tensor*> parameters() { return {&direction_, &scale_}; }

 private:
  Tensor direction_;  // K×d_f
  Tensor scale_;      // 1×K
};

struct SourceModel {
  FeatureExtractor extractor;
  WeightNormClassifier classifier;
};

struct SourceTrainConfig {
  double label_smoothing = 0.1;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::vector<std::size_t> hidden_dims = {64};
  std::size_t feature_dim = 32;
  std::uint64_t seed = 0;
};

// Q = G_e(X). Throws InvalidArgument when X has the wrong column count.
Tensor extract_features(const FeatureExtractor& extractor, const Tensor& x);

// Softmax (temperature 1) of the weight-normalized logits.
Tensor classify(const WeightNormClassifier& classifier, const Tensor& features);

// Convenience: classify(extract_features(x)).
Tensor predict_source(const SourceModel& model, const Tensor& x);

// (1−ε)·onehot(label) + ε/K per row.
Tensor smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes,
                        double epsilon);

// Mean over rows of −Σ_k t_k log softmax(logits)_k.
Var soft_cross_entropy(const Var& logits, const Tensor& targets);

// Minimizes label-smoothed cross-entropy with SGD; no class rebalancing.
// Deterministic given cfg.seed. Throws InvalidArgument on an empty dataset.
SourceModel train_source(const LabeledDataset& data, const SourceTrainConfig& cfg);

}  // namespace cpga
