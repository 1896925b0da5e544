#include "cpga/source_model.hpp"

#include <cmath>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/optim.hpp"

namespace cpga {

WeightNormClassifier::WeightNormClassifier(std::size_t feature_dim, std::size_t num_classes,
                                           Rng& rng)
    : direction_(Tensor::zeros(num_classes, feature_dim)), scale_(Tensor::zeros(1, num_classes)) {
  if (feature_dim == 0 || num_classes == 0) {
    throw InvalidArgument("classifier dimensions must be positive");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (double& v : direction_.data()) v = rng.uniform(-bound, bound);
  // Start from the plain linear layer: g_k = ‖v_k‖.
  for (std::size_t k = 0; k < num_classes; ++k) scale_[k] = l2_norm(direction_.row(k));
}

WeightNormClassifier::WeightNormClassifier(Tensor direction, Tensor scale)
    : direction_(std::move(direction)), scale_(std::move(scale)) {
  if (scale_.rows() != 1 || scale_.cols() != direction_.rows()) {
    throw InvalidArgument("classifier scale must be 1xK for a KxD direction matrix");
  }
}

namespace {

void check_features(const WeightNormClassifier& c, const Var& q) {
  if (q.cols() != c.feature_dim()) {
    throw InvalidArgument("classifier expects " + std::to_string(c.feature_dim()) +
                          "-dim features, got " + std::to_string(q.cols()));
  }
}

}  // namespace

Var WeightNormClassifier::logits(Tape& tape, const Var& features) {
  check_features(*this, features);
  const Var dirs = ag::l2_normalize_rows(tape.param(direction_));
  return ag::scale_cols(ag::matmul_nt(features, dirs), tape.param(scale_));
}

Var WeightNormClassifier::logits_frozen(Tape& tape, const Var& features) const {
  check_features(*this, features);
  const Var dirs = ag::l2_normalize_rows(tape.constant(direction_));
  return ag::scale_cols(ag::matmul_nt(features, dirs), tape.constant(scale_));
}

Tensor WeightNormClassifier::effective_directions() const {
  Tape tape;
  return ag::l2_normalize_rows(tape.constant(direction_)).value();
}

Tensor extract_features(const FeatureExtractor& extractor, const Tensor& x) {
  if (x.cols() != extractor.in_features()) {
    throw InvalidArgument("feature extractor expects " + std::to_string(extractor.in_features()) +
                          " input columns, got " + std::to_string(x.cols()));
  }
  return extractor.apply(x);
}

Tensor classify(const WeightNormClassifier& classifier, const Tensor& features) {
  Tape tape;
  const Var logits = classifier.logits_frozen(tape, tape.constant(features));
  return softmax_rows(logits.value(), 1.0);
}

Tensor predict_source(const SourceModel& model, const Tensor& x) {
  return classify(model.classifier, extract_features(model.extractor, x));
}

Tensor smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes,
                        double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidArgument("label smoothing must be in [0,1)");
  Tensor t = Tensor::full(labels.size(), num_classes, epsilon / static_cast<double>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidArgument("label out of range");
    t(i, labels[i]) += 1.0 - epsilon;
  }
  return t;
}

Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
  if (!logits.value().same_shape(targets)) {
    throw InvalidArgument("soft cross-entropy: logits " + logits.value().shape_string() +
                          " vs targets " + targets.shape_string());
  }
  Tape& tape = *logits.tape();
  const Var logp = ag::log_softmax_rows(logits, 1.0);
  const Var per_row = ag::row_sum(ag::mul(logp, tape.constant(targets)));
  return ag::affine(ag::mean(per_row), -1.0, 0.0);
}

SourceModel train_source(const LabeledDataset& data, const SourceTrainConfig& cfg) {
  if (data.size() == 0) throw InvalidArgument("cannot train a source model on an empty dataset");
  if (data.num_classes < 2) throw InvalidArgument("source training needs at least two classes");
  if (cfg.batch_size == 0) throw InvalidArgument("batch size must be positive");

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(0x5e);
  std::vector<std::size_t> dims{data.dim()};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.feature_dim);

  SourceModel model{Mlp(dims, init_rng),
                    WeightNormClassifier(cfg.feature_dim, data.num_classes, init_rng)};

  SgdState sgd({cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  std::vector<Tensor*> params = model.extractor.parameters();
  for (Tensor* p : model.classifier.parameters()) params.push_back(p);

  Rng order_rng = rng.fork(0x0d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = order_rng.permutation(data.size());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      std::vector<std::size_t> labels;
      labels.reserve(batch.size());
      for (std::size_t i : batch) labels.push_back(data.y[i]);

      Tape tape;
      const Var q = model.extractor.forward(tape, tape.constant(data.x.select_rows(batch)));
      const Var logits = model.classifier.logits(tape, q);
      const Var loss = soft_cross_entropy(
          logits, smoothed_targets(labels, data.num_classes, cfg.label_smoothing));
      tape.backward(loss);
      sgd.step(params);
    }
  }
  return model;
}

}  // namespace cpga
