#include "cpga/tcpga.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/serialization.hpp"
#include "stage2_loop.hpp"

namespace cpga {

namespace {

void check_simplex_rows(const Tensor& p) {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double total = 0.0;
    for (double v : p.row(i)) {
      if (!std::isfinite(v) || v < -1e-12) {
        throw InvalidArgument("oracle row " + std::to_string(i) + " has a negative entry");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw InvalidArgument("oracle row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

}  // namespace

ZeroShotOracle ZeroShotOracle::simulated(std::span<const std::size_t> true_labels,
                                         std::size_t num_classes, double accuracy,
                                         double smoothing, std::uint64_t seed) {
  if (num_classes < 2) throw InvalidArgument("oracle needs at least two classes");
  if (!(accuracy > 0.0 && accuracy <= 1.0)) throw InvalidArgument("oracle accuracy must be in (0,1]");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw InvalidArgument("oracle smoothing must be in [0,1)");
  }
  Rng rng(seed);
  Tensor probs = Tensor::full(true_labels.size(), num_classes,
                              smoothing / static_cast<double>(num_classes));
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const std::size_t y = true_labels[i];
    if (y >= num_classes) throw InvalidArgument("oracle label out of range");
    std::size_t label = y;
    if (!rng.bernoulli(accuracy)) {
      label = rng.index(num_classes - 1);
      if (label >= y) ++label;
    }
    probs(i, label) += 1.0 - smoothing;
  }
  return ZeroShotOracle(std::move(probs));
}

ZeroShotOracle ZeroShotOracle::from_probabilities(Tensor probabilities) {
  if (probabilities.rank() != 2 || probabilities.cols() < 2) {
    throw InvalidArgument("oracle probabilities must be n×K with K >= 2");
  }
  check_simplex_rows(probabilities);
  return ZeroShotOracle(std::move(probabilities));
}

std::span<const double> ZeroShotOracle::predict(std::size_t sample) const {
  if (sample >= size()) throw InvalidArgument("oracle sample index out of range");
  return probs_.row(sample);
}

void ZeroShotOracle::require_size(std::size_t n) const {
  if (size() != n) {
    throw InvalidArgument("oracle covers " + std::to_string(size()) + " samples, expected " +
                          std::to_string(n));
  }
}

ZeroShotOracle read_oracle_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t k = 0;
  {
    std::string_view rest = line;
    while (true) {
      const auto pos = rest.find(',');
      const auto field = rest.substr(0, pos);
      if (field != "p" + std::to_string(k)) {
        throw ParseError("header must be p0,...,p{K-1}", line_no);
      }
      ++k;
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view rest = line;
    std::size_t fields = 0;
    while (true) {
      const auto pos = rest.find(',');
      const auto field = rest.substr(0, pos);
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric probability '" + std::string(field) + "'", line_no);
      }
      values.push_back(v);
      ++fields;
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (fields != k) {
      throw ParseError("expected " + std::to_string(k) + " fields, got " + std::to_string(fields),
                       line_no);
    }
    ++rows;
  }
  return ZeroShotOracle::from_probabilities(Tensor({rows, k}, std::move(values)));
}

ZeroShotOracle load_oracle_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open oracle file " + path.string());
  return read_oracle_csv(in);
}

void write_oracle_csv(const ZeroShotOracle& oracle, std::ostream& out) {
  std::string line;
  for (std::size_t j = 0; j < oracle.num_classes(); ++j) {
    if (j > 0) line += ',';
    line += "p" + std::to_string(j);
  }
  line += '\n';
  out << line;
  char buf[32];
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    line.clear();
    const auto row = oracle.predict(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) line += ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), row[j]);
      line.append(buf, res.ptr);
    }
    line += '\n';
    out << line;
  }
}

EnsembleWeights ensemble_weights(std::span<const double> oracle_probs,
                                 std::span<const double> model_probs) {
  if (oracle_probs.size() != model_probs.size()) {
    throw InvalidArgument("ensemble inputs have different lengths");
  }
  if (oracle_probs.size() < 2) throw InvalidArgument("ensemble needs at least two classes");
  const double mc = top2_margin(oracle_probs);
  const double mp = top2_margin(model_probs);
  // Two-way softmax written as a logistic of the difference.
  const double oracle_weight = 1.0 / (1.0 + std::exp(mp - mc));
  return {oracle_weight, 1.0 - oracle_weight};
}

std::vector<double> ensemble_prediction(std::span<const double> oracle_probs,
                                        std::span<const double> model_probs,
                                        const EnsembleWeights& weights) {
  if (oracle_probs.size() != model_probs.size()) {
    throw InvalidArgument("ensemble inputs have different lengths");
  }
  std::vector<double> out(oracle_probs.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = weights.oracle * oracle_probs[k] + weights.model * model_probs[k];
  }
  return out;
}

double confidence_t(std::span<const double> ensemble) {
  if (ensemble.empty()) throw InvalidArgument("confidence of an empty prediction");
  return *std::max_element(ensemble.begin(), ensemble.end());
}

Tensor TargetClassifier::probabilities(const Tensor& features) const {
  Tape tape;
  return softmax_rows(layer_.forward_frozen(tape, tape.constant(features)).value());
}

ModelFile to_model_file(const TargetClassifier& classifier) {
  ModelFile m;
  m.kind = "linear";
  m.dims = {classifier.layer().in_features(), classifier.layer().out_features()};
  m.tensors.emplace_back("weight", classifier.layer().weight);
  m.tensors.emplace_back("bias", classifier.layer().bias);
  return m;
}

TargetClassifier target_classifier_from_model_file(const ModelFile& file) {
  if (file.kind != "linear") {
    throw InvalidArgument("expected a linear model, got '" + file.kind + "'");
  }
  Linear l;
  l.weight = file.tensor("weight");
  l.bias = file.tensor("bias");
  if (file.dims.size() != 2 || l.weight.cols() != file.dims[0] || l.weight.rows() != file.dims[1] ||
      l.bias.rows() != 1 || l.bias.cols() != file.dims[1]) {
    throw InvalidArgument("linear tensors do not match the declared dims");
  }
  return TargetClassifier(std::move(l));
}

Var loss_target_ce(const Var& logits, const Tensor& soft_targets) {
  return soft_cross_entropy(logits, soft_targets);
}

Tensor predict_final(const FeatureExtractor& extractor,
                     const WeightNormClassifier& source_classifier,
                     const TargetClassifier& target_classifier, const Tensor& x) {
  const Tensor features = extract_features(extractor, x);
  Tensor probs = classify(source_classifier, features);
  const Tensor target = target_classifier.probabilities(features);
  for (std::size_t i = 0; i < probs.numel(); ++i) probs[i] = 0.5 * (probs[i] + target[i]);
  return probs;
}

TcpgaResult adapt_tcpga(const SourceModel& source, const PrototypeGenerator& generator,
                        const Tensor& target_x, const ZeroShotOracle& oracle,
                        const TcpgaConfig& cfg, std::span<const std::size_t> eval_labels) {
  detail::Stage2Options options;
  options.config = cfg;
  options.oracle = &oracle;
  options.update_source_classifier = cfg.update_source_classifier;
  detail::Stage2Outcome o = detail::run_stage2(source, generator, target_x, options, eval_labels);
  return TcpgaResult{std::move(o.extractor), std::move(o.projector), std::move(o.classifier),
                     std::move(*o.target_classifier), std::move(o.report)};
}

}  // namespace cpga
