#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cpga/autograd.hpp"
#include "cpga/nn.hpp"
#include "cpga/prototype_generation.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// ---------------------------------------------------------------------------
// Centroid pseudo-labeling. Centroids are K×d_f rows in extractor space.

// c_k = Σ_i ŷ_ik q_i / Σ_i ŷ_ik. A class with zero total weight gets the
// global feature mean and is listed in `empty_classes` when provided.
Tensor init_centroids(const Tensor& features, const Tensor& soft_predictions,
                      std::vector<std::size_t>* empty_classes = nullptr);

// Indicator-weighted means of the features assigned to each class. Classes
// with no assigned sample keep their row from `previous`.
Tensor update_centroids(const Tensor& features, std::span<const std::size_t> hard_labels,
                        const Tensor& previous);

struct PseudoLabels {
  Tensor soft;                     // n×K, softmax of φ(q_i, c_k)/τ
  std::vector<std::size_t> hard;   // row argmax, ties to the lowest class
};

// Throws DegenerateInput on a zero feature vector or zero centroid.
PseudoLabels pseudo_labels(const Tensor& features, const Tensor& centroids, double temperature);

// w_i = exp(φ(q_i, c_{ȳ_i})/τ) / Σ_k exp(φ(q_i, c_k)/τ).
std::vector<double> confidence_weight(const Tensor& features, const Tensor& centroids,
                                      std::span<const std::size_t> hard_labels,
                                      double temperature);

// ---------------------------------------------------------------------------
// Stage-2 losses.

// Mean over anchors of −w_i log softmax(u_i·V ᵀ / τ)[ȳ_i]; one prototype row
// per class in V. Rows of u and V must be unit-norm within 1e-6.
Var weighted_infonce(const Var& anchors, const Var& prototypes,
                     std::span<const std::size_t> labels, std::span<const double> weights,
                     double temperature);

// Momentum memory of non-parametric predictions, one simplex row per target
// sample: h_i ← β h_i + (1−β) o_i.
class ElrBank {
 public:
  ElrBank() = default;
  ElrBank(Tensor initial, double beta);  // beta in [0,1]

  double beta() const noexcept { return beta_; }
  const Tensor& rows() const noexcept { return h_; }
  std::span<const double> row(std::size_t i) const { return h_.row(i); }
  std::size_t size() const { return h_.rows(); }

  void update(std::size_t i, std::span<const double> prediction);

 private:
  Tensor h_;
  double beta_ = 0.9;
};

// Non-parametric prediction o = softmax(u Vᵀ / τ); the bank rows for `indices`
// are updated with o first, then the loss mean_i log(1 − o_i·h_i) is formed
// against the updated rows (h enters as a constant; 1 − o·h is clamped at
// 1e-12).
Var elr_step(const Var& anchors, const Var& prototypes, ElrBank& bank,
             std::span<const std::size_t> indices, double temperature);

// Target feature memory; row i always belongs to target sample i.
class FeatureBank {
 public:
  FeatureBank() = default;
  explicit FeatureBank(Tensor features) : q_(std::move(features)) {}

  const Tensor& rows() const noexcept { return q_; }
  std::size_t size() const { return q_.rows(); }
  void refresh(Tensor features);
  void update(std::span<const std::size_t> indices, const Tensor& features);

 private:
  Tensor q_;
};

// Mean over the batch of the entropy of s_ij = softmax_{j≠i}(φ(q_i, Q_j)/τ),
// where i is the anchor's own bank index. Bank entries are constants.
// Throws InvalidArgument for a bank with fewer than two entries.
Var loss_nc(const Var& features, const FeatureBank& bank, std::span<const std::size_t> indices,
            double temperature);

// ---------------------------------------------------------------------------
// Projector: FC stack with ReLU, followed by L2 row normalization.
class Projector {
 public:
  Projector() = default;
  Projector(std::vector<std::size_t> dims, Rng& rng) : mlp_(std::move(dims), rng) {}
  explicit Projector(Mlp mlp) : mlp_(std::move(mlp)) {}

  Var forward(Tape& tape, const Var& x) { return ag::l2_normalize_rows(mlp_.forward(tape, x)); }
  Tensor apply(const Tensor& x) const;

  const Mlp& mlp() const noexcept { return mlp_; }
  std::vector<Tensor*> parameters() { return mlp_.parameters(); }

 private:
  Mlp mlp_;
};

// ---------------------------------------------------------------------------
// Training loop configuration and reporting.

struct CpgaConfig {
  std::size_t epochs = 50;
  double temperature = 0.07;
  double beta = 0.9;
  double lambda = 5.0;   // ELR weight
  double eta = 0.05;     // neighborhood-clustering weight
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::vector<std::size_t> projector_dims = {64, 64, 32};
  bool confidence_weighting = true;  // false: w ≡ 1
  std::uint64_t seed = 0;
};

void validate(const CpgaConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_con = 0.0;
  double loss_elr = 0.0;
  double loss_nc = 0.0;
  double loss_ce_t = 0.0;
  double overall_acc = 0.0;
  double per_class_acc = 0.0;
  std::optional<double> d_pdd;
  // Hard pseudo labels used for this epoch's alignment (absent at epoch 0).
  std::optional<double> pseudo_label_acc;
  std::optional<double> pseudo_label_d_pdd;
};

struct AdaptationReport {
  std::vector<EpochRecord> epochs;
  // Centroid classes that received zero weight during initialization.
  std::vector<std::size_t> empty_centroid_classes;

  const EpochRecord& initial() const { return epochs.front(); }
  const EpochRecord& final() const { return epochs.back(); }
};

// epoch,loss_con,loss_elr,loss_nc,overall_acc,per_class_acc,d_pdd
void write_report_csv(const AdaptationReport& report, std::ostream& out);

struct CpgaResult {
  FeatureExtractor extractor;
  Projector projector;
  WeightNormClassifier classifier;  // unchanged copy of G_y
  AdaptationReport report;
};

// Stage 2 of CPGA. `eval_labels` (optional) are held-out target labels used
// only for the per-epoch report; the learner never reads them. Epoch 0 of
// the report evaluates the unadapted source model.
CpgaResult adapt_cpga(const SourceModel& source, const PrototypeGenerator& generator,
                      const Tensor& target_x, const CpgaConfig& cfg,
                      std::span<const std::size_t> eval_labels = {});

}  // namespace cpga
