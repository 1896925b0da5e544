#include "stage2_loop.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/metrics.hpp"
#include "cpga/optim.hpp"

namespace cpga {

void validate(const CpgaConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) throw InvalidArgument("beta must be in [0,1)");
  if (!(cfg.lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(cfg.eta >= 0.0)) throw InvalidArgument("eta must be non-negative");
  if (cfg.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (cfg.projector_dims.empty()) throw InvalidArgument("projector needs at least one layer");
}

namespace {

void append(std::string& line, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  line.append(buf, res.ptr);
}

}  // namespace

void write_report_csv(const AdaptationReport& report, std::ostream& out) {
  out << "epoch,loss_con,loss_elr,loss_nc,overall_acc,per_class_acc,d_pdd\n";
  std::string line;
  for (const EpochRecord& r : report.epochs) {
    line = std::to_string(r.epoch);
    for (double v : {r.loss_con, r.loss_elr, r.loss_nc, r.overall_acc, r.per_class_acc}) {
      line += ',';
      append(line, v);
    }
    line += ',';
    if (r.d_pdd) {
      append(line, *r.d_pdd);
    } else {
      line += "nan";
    }
    line += '\n';
    out << line;
  }
}

namespace detail {
namespace {

constexpr std::uint64_t kProjectorStream = 0x701;
constexpr std::uint64_t kTargetHeadStream = 0x702;
constexpr std::uint64_t kShuffleStream = 0x703;
constexpr std::uint64_t kPrototypeStream = 0x704;

struct Evaluation {
  double overall = std::nan("");
  double per_class = std::nan("");
  std::optional<double> d_pdd;
};

Evaluation evaluate_predictions(const Tensor& probs, std::span<const std::size_t> labels,
                                std::size_t num_classes) {
  Evaluation e;
  if (labels.empty()) return e;
  const auto pred = argmax_rows(probs);
  const EvalReport r = evaluate(pred, labels, num_classes);
  e.overall = r.overall_acc;
  e.per_class = r.per_class_acc;
  e.d_pdd = r.d_pdd;
  return e;
}

}  // namespace

Stage2Outcome run_stage2(const SourceModel& source, const PrototypeGenerator& generator,
                         const Tensor& target_x, const Stage2Options& options,
                         std::span<const std::size_t> eval_labels) {
  const CpgaConfig& cfg = options.config;
  validate(cfg);
  const std::size_t n = target_x.rows();
  const std::size_t k = source.classifier.num_classes();
  const std::size_t d_f = source.classifier.feature_dim();
  const bool target_aware = options.oracle != nullptr;
  if (n == 0) throw InvalidArgument("stage 2 needs target samples");
  if (generator.num_classes() != k || generator.feature_dim() != d_f) {
    throw InvalidArgument("generator does not match the source classifier");
  }
  if (!eval_labels.empty() && eval_labels.size() != n) {
    throw InvalidArgument("evaluation labels must cover every target sample");
  }
  if (target_aware) {
    options.oracle->require_size(n);
    if (options.oracle->num_classes() != k) {
      throw InvalidArgument("oracle class count does not match the source classifier");
    }
  }

  const Rng root(cfg.seed);
  Rng shuffle_rng = root.fork(kShuffleStream);
  Rng proto_rng = root.fork(kPrototypeStream);

  Stage2Outcome out;
  out.extractor = source.extractor;
  out.classifier = source.classifier;
  {
    Rng init = root.fork(kProjectorStream);
    std::vector<std::size_t> dims{d_f};
    dims.insert(dims.end(), cfg.projector_dims.begin(), cfg.projector_dims.end());
    out.projector = Projector(dims, init);
  }
  if (target_aware) {
    Rng init = root.fork(kTargetHeadStream);
    out.target_classifier.emplace(d_f, k, init);
  }

  auto predict = [&](const Tensor& features) {
    Tensor probs = classify(out.classifier, features);
    if (!target_aware) return probs;
    const Tensor pt = out.target_classifier->probabilities(features);
    for (std::size_t i = 0; i < probs.numel(); ++i) probs[i] = 0.5 * (probs[i] + pt[i]);
    return probs;
  };

  // Epoch 0: the unadapted source model.
  Tensor features = extract_features(out.extractor, target_x);
  {
    const Evaluation e = evaluate_predictions(classify(out.classifier, features), eval_labels, k);
    EpochRecord r;
    r.overall_acc = e.overall;
    r.per_class_acc = e.per_class;
    r.d_pdd = e.d_pdd;
    out.report.epochs.push_back(r);
  }
  if (cfg.epochs == 0) return out;

  Tensor centroids = init_centroids(features, classify(out.classifier, features),
                                    &out.report.empty_centroid_classes);
  FeatureBank feature_bank(features);
  ElrBank elr_bank;
  {
    const Tensor u = out.projector.apply(features);
    const Tensor v = out.projector.apply(generator.sample_one_per_class(proto_rng));
    Tape tape;
    const Var logits = ag::matmul_nt(tape.constant(u), tape.constant(v));
    elr_bank = ElrBank(softmax_rows(logits.value(), cfg.temperature), cfg.beta);
  }

  SgdState sgd({cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  std::vector<Tensor*> params = out.extractor.parameters();
  for (Tensor* p : out.projector.parameters()) params.push_back(p);
  if (target_aware) {
    for (Tensor* p : out.target_classifier->parameters()) params.push_back(p);
  }
  if (options.update_source_classifier) {
    for (Tensor* p : out.classifier.parameters()) params.push_back(p);
  }

  std::vector<std::size_t> hard;
  std::vector<double> weights(n, 1.0);
  Tensor soft_targets;  // ỹ, target-aware only
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    features = extract_features(out.extractor, target_x);
    feature_bank.refresh(features);
    if (!hard.empty()) centroids = update_centroids(features, hard, centroids);
    const PseudoLabels pl = pseudo_labels(features, centroids, cfg.temperature);

    if (target_aware) {
      soft_targets = Tensor::zeros(n, k);
      hard.assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto oracle_row = options.oracle->predict(i);
        const auto model_row = pl.soft.row(i);
        const auto mixed =
            ensemble_prediction(oracle_row, model_row, ensemble_weights(oracle_row, model_row));
        std::copy(mixed.begin(), mixed.end(), soft_targets.row(i).begin());
        hard[i] = argmax(mixed);
        weights[i] = confidence_t(mixed);
      }
    } else {
      hard = pl.hard;
      if (cfg.confidence_weighting) {
        for (std::size_t i = 0; i < n; ++i) weights[i] = pl.soft(i, hard[i]);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (!eval_labels.empty()) {
      const EvalReport pr = evaluate(hard, eval_labels, k);
      rec.pseudo_label_acc = pr.overall_acc;
      rec.pseudo_label_d_pdd = pr.d_pdd;
    }

    const std::vector<std::size_t> order = shuffle_rng.permutation(n);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batches) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<std::size_t> batch_labels;
      std::vector<double> batch_weights;
      for (std::size_t i : idx) {
        batch_labels.push_back(hard[i]);
        batch_weights.push_back(weights[i]);
      }

      Tape tape;
      const Var q = out.extractor.forward(tape, tape.constant(target_x.select_rows(idx)));
      const Var u = out.projector.forward(tape, q);
      const Var v =
          out.projector.forward(tape, tape.constant(generator.sample_one_per_class(proto_rng)));

      const Var l_con = weighted_infonce(u, v, batch_labels, batch_weights, cfg.temperature);
      const Var l_elr = elr_step(u, v, elr_bank, idx, cfg.temperature);
      const Var l_nc = loss_nc(q, feature_bank, idx, cfg.temperature);
      Var total = ag::add(l_con, ag::affine(l_elr, cfg.lambda, 0.0));
      total = ag::add(total, ag::affine(l_nc, cfg.eta, 0.0));
      if (target_aware) {
        const Var l_ce_t =
            loss_target_ce(out.target_classifier->logits(tape, q), soft_targets.select_rows(idx));
        total = ag::add(total, l_ce_t);
        rec.loss_ce_t += l_ce_t.value().item();
      }
      if (options.update_source_classifier) {
        // Present on the tape so the optimizer sees a gradient for G_y.
        const Var l_src = soft_cross_entropy(out.classifier.logits(tape, q),
                                             one_hot(batch_labels, k));
        total = ag::add(total, l_src);
      }
      rec.loss_con += l_con.value().item();
      rec.loss_elr += l_elr.value().item();
      rec.loss_nc += l_nc.value().item();

      feature_bank.update(idx, q.value());
      tape.backward(total);
      sgd.step(params);
    }
    const double nb = static_cast<double>(batches);
    rec.loss_con /= nb;
    rec.loss_elr /= nb;
    rec.loss_nc /= nb;
    rec.loss_ce_t /= nb;

    const Evaluation e =
        evaluate_predictions(predict(extract_features(out.extractor, target_x)), eval_labels, k);
    rec.overall_acc = e.overall;
    rec.per_class_acc = e.per_class;
    rec.d_pdd = e.d_pdd;
    out.report.epochs.push_back(rec);
  }
  return out;
}

}  // namespace detail

CpgaResult adapt_cpga(const SourceModel& source, const PrototypeGenerator& generator,
                      const Tensor& target_x, const CpgaConfig& cfg,
                      std::span<const std::size_t> eval_labels) {
  detail::Stage2Options options;
  options.config = cfg;
  detail::Stage2Outcome o = detail::run_stage2(source, generator, target_x, options, eval_labels);
  return CpgaResult{std::move(o.extractor), std::move(o.projector), std::move(o.classifier),
                    std::move(o.report)};
}

}  // namespace cpga
