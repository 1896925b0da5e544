#include "cpga/prototype_generation.hpp"

#include <algorithm>
#include <cmath>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/optim.hpp"

namespace cpga {

PrototypeGenerator::PrototypeGenerator(std::size_t num_classes, std::size_t noise_dim,
                                       std::size_t hidden_dim, std::size_t feature_dim, Rng& rng)
    : embedding_(Tensor::zeros(num_classes, noise_dim)),
      head_({noise_dim, hidden_dim, feature_dim}, rng) {
  if (num_classes == 0) throw InvalidArgument("generator needs at least one class");
  for (double& v : embedding_.data()) v = rng.normal();
}

PrototypeGenerator::PrototypeGenerator(Tensor embedding, Mlp head)
    : embedding_(std::move(embedding)), head_(std::move(head)) {
  if (head_.in_features() != embedding_.cols()) {
    throw InvalidArgument("generator embedding width does not match the FC input");
  }
}

void PrototypeGenerator::check_inputs(std::span<const std::size_t> labels,
                                      const Tensor& noise) const {
  for (std::size_t l : labels) {
    if (l >= num_classes()) {
      throw InvalidArgument("generator label " + std::to_string(l) + " out of range");
    }
  }
  if (noise.rows() != labels.size() || noise.cols() != noise_dim()) {
    throw InvalidArgument("noise must be " + std::to_string(labels.size()) + "x" +
                          std::to_string(noise_dim()) + ", got " + noise.shape_string());
  }
}

Var PrototypeGenerator::generate(Tape& tape, std::span<const std::size_t> labels,
                                 const Tensor& noise) {
  check_inputs(labels, noise);
  const Var gated = ag::mul(ag::gather_rows(tape.param(embedding_), labels), tape.constant(noise));
  return head_.forward(tape, gated);
}

Tensor PrototypeGenerator::generate(std::span<const std::size_t> labels,
                                    const Tensor& noise) const {
  check_inputs(labels, noise);
  Tape tape;
  const Var gated =
      ag::mul(ag::gather_rows(tape.constant(embedding_), labels), tape.constant(noise));
  return head_.forward_frozen(tape, gated).value();
}

Tensor PrototypeGenerator::sample_noise(std::size_t count, Rng& rng) const {
  Tensor z = Tensor::zeros(count, noise_dim());
  for (double& v : z.data()) v = rng.uniform(0.0, 1.0);
  return z;
}

Tensor PrototypeGenerator::sample(std::span<const std::size_t> labels, Rng& rng) const {
  return generate(labels, sample_noise(labels.size(), rng));
}

Tensor PrototypeGenerator::sample_one_per_class(Rng& rng) const {
  std::vector<std::size_t> labels(num_classes());
  for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = k;
  return sample(labels, rng);
}

std::vector<Tensor*> PrototypeGenerator::parameters() {
  std::vector<Tensor*> p{&embedding_};
  for (Tensor* t : head_.parameters()) p.push_back(t);
  return p;
}

ModelFile to_model_file(const PrototypeGenerator& generator) {
  ModelFile m = to_model_file(generator.head(), "generator");
  m.dims.insert(m.dims.begin(), generator.num_classes());
  m.tensors.insert(m.tensors.begin(), {"embedding", generator.embedding()});
  return m;
}

PrototypeGenerator generator_from_model_file(const ModelFile& file) {
  if (file.kind != "generator") {
    throw InvalidArgument("expected a generator model, got '" + file.kind + "'");
  }
  if (file.dims.size() < 3) throw InvalidArgument("generator model needs K plus FC dims");
  ModelFile head = file;
  head.dims.erase(head.dims.begin());
  const Tensor& emb = file.tensor("embedding");
  if (emb.rows() != file.dims[0]) throw InvalidArgument("embedding rows do not match K");
  return PrototypeGenerator(emb, mlp_from_model_file(head));
}

Var loss_proto_ce(const Var& prototypes, std::span<const std::size_t> labels,
                  const WeightNormClassifier& classifier) {
  Tape& tape = *prototypes.tape();
  const Var logits = classifier.logits_frozen(tape, prototypes);
  return soft_cross_entropy(logits, one_hot(labels, classifier.num_classes()));
}

ContrastivePairs sample_contrastive_pairs(std::span<const std::size_t> labels,
                                          std::size_t num_classes, Rng& rng) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidArgument("label out of range");
    members[labels[i]].push_back(i);
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (members[k].size() < 2) {
      throw InvalidBatch("class " + std::to_string(k) + " has " +
                         std::to_string(members[k].size()) +
                         " prototypes in the batch; at least 2 are required");
    }
  }
  ContrastivePairs pairs;
  pairs.num_classes = num_classes;
  pairs.columns.reserve(labels.size() * num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& same = members[labels[i]];
    // Uniform over the other members of the anchor's class.
    std::size_t pick = rng.index(same.size() - 1);
    if (same[pick] == i) pick = same.size() - 1;
    pairs.columns.push_back(same[pick]);
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (k == labels[i]) continue;
      pairs.columns.push_back(members[k][rng.index(members[k].size())]);
    }
  }
  return pairs;
}

Var loss_proto_con(const Var& prototypes, const ContrastivePairs& pairs, double temperature) {
  const std::size_t batch = prototypes.rows();
  if (pairs.num_classes < 2 || pairs.columns.size() != batch * pairs.num_classes) {
    throw InvalidArgument("contrastive pairs do not match the prototype batch");
  }
  const Var unit = ag::l2_normalize_rows(prototypes);
  const Var sims = ag::matmul_nt(unit, unit);
  const Var candidates = ag::take(sims, pairs.columns, pairs.num_classes);
  const Var logp = ag::log_softmax_rows(candidates, temperature);
  const std::vector<std::size_t> positive(batch, 0);
  return ag::affine(ag::mean(ag::take(logp, positive, 1)), -1.0, 0.0);
}

PrototypeGenerator make_generator(std::size_t num_classes, std::size_t feature_dim,
                                  const Stage1Config& cfg) {
  Rng rng = Rng(cfg.seed).fork(0x9e);
  return PrototypeGenerator(num_classes, cfg.noise_dim, cfg.hidden_dim, feature_dim, rng);
}

Stage1Report train_stage1(PrototypeGenerator& generator, const WeightNormClassifier& classifier,
                          const Stage1Config& cfg) {
  if (cfg.prototypes_per_class < 2) {
    throw InvalidArgument("stage 1 needs at least two prototypes per class per batch");
  }
  if (generator.num_classes() != classifier.num_classes() ||
      generator.feature_dim() != classifier.feature_dim()) {
    throw InvalidArgument("generator and classifier disagree on class count or feature dim");
  }
  const std::size_t k = generator.num_classes();
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < cfg.prototypes_per_class; ++r) labels.push_back(c);
  }

  Rng rng = Rng(cfg.seed).fork(0x51);
  SgdState sgd({cfg.learning_rate, cfg.momentum, 0.0});
  const std::vector<Tensor*> params = generator.parameters();
  Stage1Report report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double ce_sum = 0.0;
    double con_sum = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      Tape tape;
      const Var p = generator.generate(tape, labels, generator.sample_noise(labels.size(), rng));
      const Var ce = loss_proto_ce(p, labels, classifier);
      Var total = ce;
      if (cfg.use_contrastive && k >= 2) {
        const Var con =
            loss_proto_con(p, sample_contrastive_pairs(labels, k, rng), cfg.temperature);
        con_sum += con.value().item();
        total = ag::add(ce, con);
      }
      ce_sum += ce.value().item();
      tape.backward(total);
      sgd.step(params);
    }
    const double n = static_cast<double>(std::max<std::size_t>(cfg.batches_per_epoch, 1));
    report.loss_ce.push_back(ce_sum / n);
    report.loss_con.push_back(con_sum / n);
  }
  return report;
}

std::vector<Tensor> sample_prototype_sets(const PrototypeGenerator& generator,
                                          std::size_t per_class, Rng& rng) {
  std::vector<Tensor> sets;
  for (std::size_t c = 0; c < generator.num_classes(); ++c) {
    const std::vector<std::size_t> labels(per_class, c);
    sets.push_back(generator.sample(labels, rng));
  }
  return sets;
}

PrototypeStats prototype_stats(const std::vector<Tensor>& per_class) {
  if (per_class.size() < 2) throw InvalidArgument("prototype stats need at least two classes");
  std::vector<Tensor> unit;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c].rows() < 2) {
      throw InvalidArgument("class " + std::to_string(c) + " needs at least two prototypes");
    }
    unit.push_back(normalize_rows(per_class[c]));
  }
  auto cos = [](std::span<const double> a, std::span<const double> b) {
    return std::clamp(dot(a, b), -1.0, 1.0);
  };

  PrototypeStats s;
  double intra_sum = 0.0;
  for (const Tensor& u : unit) {
    double d = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < u.rows(); ++i)
      for (std::size_t j = i + 1; j < u.rows(); ++j, ++pairs) d += 1.0 - cos(u.row(i), u.row(j));
    intra_sum += d / static_cast<double>(pairs);
  }
  s.intra_distance = intra_sum / static_cast<double>(unit.size());

  double inter = 0.0;
  double abs_cos = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < unit.size(); ++a)
    for (std::size_t b = a + 1; b < unit.size(); ++b)
      for (std::size_t i = 0; i < unit[a].rows(); ++i)
        for (std::size_t j = 0; j < unit[b].rows(); ++j, ++pairs) {
          const double c = cos(unit[a].row(i), unit[b].row(j));
          inter += 1.0 - c;
          abs_cos += std::abs(c);
        }
  s.inter_distance = inter / static_cast<double>(pairs);
  s.mean_abs_inter_cosine = abs_cos / static_cast<double>(pairs);
  return s;
}

}  // namespace cpga
