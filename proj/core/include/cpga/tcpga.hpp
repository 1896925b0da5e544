#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "cpga/adaptation.hpp"
#include "cpga/nn.hpp"
#include "cpga/prototype_generation.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// Stand-in for a zero-shot model's per-sample class probabilities. All
// predictions are fixed at construction.
class ZeroShotOracle {
 public:
  // For each sample: l = true label with probability `accuracy`, otherwise a
  // uniformly chosen wrong label; prediction (1−s)·onehot(l) + s/K.
  static ZeroShotOracle simulated(std::span<const std::size_t> true_labels,
                                  std::size_t num_classes, double accuracy, double smoothing,
                                  std::uint64_t seed);
  // Rows must be probability vectors (within 1e-6).
  static ZeroShotOracle from_probabilities(Tensor probabilities);

  std::size_t size() const { return probs_.rows(); }
  std::size_t num_classes() const { return probs_.cols(); }
  std::span<const double> predict(std::size_t sample) const;
  const Tensor& probabilities() const noexcept { return probs_; }

  // Throws InvalidArgument unless the oracle covers exactly n samples.
  void require_size(std::size_t n) const;

 private:
  explicit ZeroShotOracle(Tensor probs) : probs_(std::move(probs)) {}
  Tensor probs_;
};

// CSV with header p0,...,p{K−1}; row i is sample i.
ZeroShotOracle load_oracle_csv(const std::filesystem::path& path);
ZeroShotOracle read_oracle_csv(std::istream& in);
void write_oracle_csv(const ZeroShotOracle& oracle, std::ostream& out);

struct EnsembleWeights {
  double oracle = 0.5;
  double model = 0.5;
};

// Softmax over the top-1 minus top-2 margins of the two predictions.
// Throws InvalidArgument when K < 2 or the lengths differ.
EnsembleWeights ensemble_weights(std::span<const double> oracle_probs,
                                 std::span<const double> model_probs);

// ā_c · oracle + ā_p · model.
std::vector<double> ensemble_prediction(std::span<const double> oracle_probs,
                                        std::span<const double> model_probs,
                                        const EnsembleWeights& weights);

// max_k ỹ_k.
double confidence_t(std::span<const double> ensemble);

// Linear layer K×d_f + bias; softmax gives the target-aware prediction.
class TargetClassifier {
 public:
  TargetClassifier() = default;
  TargetClassifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng)
      : layer_(feature_dim, num_classes, rng) {}
  explicit TargetClassifier(Linear layer) : layer_(std::move(layer)) {}

  Var logits(Tape& tape, const Var& features) { return layer_.forward(tape, features); }
  Tensor probabilities(const Tensor& features) const;

  const Linear& layer() const noexcept { return layer_; }
  std::vector<Tensor*> parameters() { return {&layer_.weight, &layer_.bias}; }

 private:
  Linear layer_;
};

ModelFile to_model_file(const TargetClassifier& classifier);
TargetClassifier target_classifier_from_model_file(const ModelFile& file);

// Mean soft-label cross-entropy −Σ_k ỹ_k log softmax(logits)_k.
Var loss_target_ce(const Var& logits, const Tensor& soft_targets);

// Mean of classify(G_y, G_e(X)) and softmax(G_t(G_e(X))).
Tensor predict_final(const FeatureExtractor& extractor, const WeightNormClassifier& source_classifier,
                     const TargetClassifier& target_classifier, const Tensor& x);

struct TcpgaConfig : CpgaConfig {
  double oracle_accuracy = 0.85;
  double oracle_smoothing = 0.2;
  // Also train G_y in stage 2 (off by default; the objective's parameter set
  // excludes it).
  bool update_source_classifier = false;
};

struct TcpgaResult {
  FeatureExtractor extractor;
  Projector projector;
  WeightNormClassifier classifier;
  TargetClassifier target_classifier;
  AdaptationReport report;
};

// Stage 2 of T-CPGA. The oracle must cover every target sample. Epoch 0 of the
// report evaluates the unadapted source model; later epochs evaluate
// predict_final.
TcpgaResult adapt_tcpga(const SourceModel& source, const PrototypeGenerator& generator,
                        const Tensor& target_x, const ZeroShotOracle& oracle,
                        const TcpgaConfig& cfg, std::span<const std::size_t> eval_labels = {});

}  // namespace cpga
