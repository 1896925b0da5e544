#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cpga/autograd.hpp"
#include "cpga/nn.hpp"
#include "cpga/random.hpp"
#include "cpga/serialization.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// Conditional generator p = FC(embed(y) ⊙ z) with z ~ U(0,1)^noise_dim.
class PrototypeGenerator {
 public:
  PrototypeGenerator() = default;
  PrototypeGenerator(std::size_t num_classes, std::size_t noise_dim, std::size_t hidden_dim,
                     std::size_t feature_dim, Rng& rng);
  PrototypeGenerator(Tensor embedding, Mlp head);

  std::size_t num_classes() const { return embedding_.rows(); }
  std::size_t noise_dim() const { return embedding_.cols(); }
  std::size_t feature_dim() const { return head_.out_features(); }

  // Throws InvalidArgument for out-of-range labels or a noise matrix that is
  // not |labels|×noise_dim.
  Var generate(Tape& tape, std::span<const std::size_t> labels, const Tensor& noise);
  Tensor generate(std::span<const std::size_t> labels, const Tensor& noise) const;

  Tensor sample_noise(std::size_t count, Rng& rng) const;
  // Fresh prototypes for the given labels.
  Tensor sample(std::span<const std::size_t> labels, Rng& rng) const;
  // One prototype per class, row k conditioned on class k.
  Tensor sample_one_per_class(Rng& rng) const;

  const Tensor& embedding() const noexcept { return embedding_; }
  const Mlp& head() const noexcept { return head_; }
  std::vector<Tensor*> parameters();

 private:
  void check_inputs(std::span<const std::size_t> labels, const Tensor& noise) const;

  Tensor embedding_;  // K×noise_dim
  Mlp head_;          // noise_dim → hidden → d_f
};

ModelFile to_model_file(const PrototypeGenerator& generator);
PrototypeGenerator generator_from_model_file(const ModelFile& file);

// Mean over the batch of −log G_y(p)[label]; G_y enters as a constant.
Var loss_proto_ce(const Var& prototypes, std::span<const std::size_t> labels,
                  const WeightNormClassifier& classifier);

// Column indices into the B×B similarity matrix: for anchor i, entry 0 is the
// positive and entries 1..K−1 are one negative from each other class.
struct ContrastivePairs {
  std::size_t num_classes = 0;
  std::vector<std::size_t> columns;  // B×K row-major
};

// Positive: a random other prototype of the anchor's class. Negatives: one
// uniformly chosen prototype from every other class. Throws InvalidBatch when
// any class has fewer than two prototypes in the batch.
ContrastivePairs sample_contrastive_pairs(std::span<const std::size_t> labels,
                                          std::size_t num_classes, Rng& rng);

// Mean over anchors of −log softmax over [φ(p,o⁺), φ(p,o⁻_1..K−1)] / τ,
// with φ the cosine similarity.
Var loss_proto_con(const Var& prototypes, const ContrastivePairs& pairs, double temperature);

struct Stage1Config {
  std::size_t epochs = 200;
  std::size_t batches_per_epoch = 5;
  std::size_t prototypes_per_class = 2;
  double temperature = 0.07;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t noise_dim = 100;
  std::size_t hidden_dim = 64;
  bool use_contrastive = true;  // false: cross-entropy only
  std::uint64_t seed = 0;
};

struct Stage1Report {
  std::vector<double> loss_ce;   // per epoch, averaged over batches
  std::vector<double> loss_con;
};

PrototypeGenerator make_generator(std::size_t num_classes, std::size_t feature_dim,
                                  const Stage1Config& cfg);

// Minimizes L_ce + L_con over the generator parameters only; the classifier
// is read, never written.
Stage1Report train_stage1(PrototypeGenerator& generator, const WeightNormClassifier& classifier,
                          const Stage1Config& cfg);

struct PrototypeStats {
  double inter_distance = 0.0;       // mean 1−φ over cross-class pairs
  double intra_distance = 0.0;       // mean over classes of mean within-class 1−φ
  double mean_abs_inter_cosine = 0.0;
};

// per_class[k] holds class k's prototypes as rows; each needs ≥ 2 rows.
PrototypeStats prototype_stats(const std::vector<Tensor>& per_class);

// Draws `per_class` fresh prototypes for every class.
std::vector<Tensor> sample_prototype_sets(const PrototypeGenerator& generator,
                                          std::size_t per_class, Rng& rng);

}  // namespace cpga
