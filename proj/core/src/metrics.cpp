#include "cpga/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpga/errors.hpp"

namespace cpga {

namespace {

void check_inputs(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (truth.empty()) throw InvalidArgument("evaluation needs at least one sample");
  if (predicted.size() != truth.size()) {
    throw InvalidArgument("prediction/label length mismatch: " + std::to_string(predicted.size()) +
                          " vs " + std::to_string(truth.size()));
  }
}

}  // namespace

std::vector<std::size_t> label_histogram(std::span<const std::size_t> labels,
                                         std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) {
    if (l >= num_classes) throw InvalidArgument("label " + std::to_string(l) + " out of range");
    ++counts[l];
  }
  return counts;
}

EvalReport accuracies(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                      std::size_t num_classes) {
  check_inputs(predicted, truth);
  std::vector<std::size_t> total(num_classes, 0);
  std::vector<std::size_t> correct(num_classes, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw InvalidArgument("label out of range at sample " + std::to_string(i));
    }
    ++total[truth[i]];
    if (predicted[i] == truth[i]) {
      ++correct[truth[i]];
      ++hits;
    }
  }
  EvalReport r;
  r.overall_acc = static_cast<double>(hits) / static_cast<double>(truth.size());
  r.class_recalls.resize(num_classes);
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (total[k] == 0) continue;
    const double recall = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
    r.class_recalls[k] = recall;
    recall_sum += recall;
    ++present;
  }
  r.per_class_acc = recall_sum / static_cast<double>(present);
  return r;
}

double d_pdd(std::span<const std::size_t> pseudo, std::span<const std::size_t> truth,
             std::size_t num_classes) {
  check_inputs(pseudo, truth);
  const auto pl = label_histogram(pseudo, num_classes);
  const auto gt = label_histogram(truth, num_classes);
  double total = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (gt[k] == 0) {
      throw InvalidArgument("class " + std::to_string(k) +
                            " has no true samples; d_pdd is undefined");
    }
    const double diff = std::abs(static_cast<double>(pl[k]) - static_cast<double>(gt[k]));
    total += diff / static_cast<double>(gt[k]);
  }
  return total;
}

EvalReport evaluate(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                    std::size_t num_classes) {
  EvalReport r = accuracies(predicted, truth, num_classes);
  const bool all_present = std::all_of(r.class_recalls.begin(), r.class_recalls.end(),
                                       [](const auto& v) { return v.has_value(); });
  if (all_present) r.d_pdd = d_pdd(predicted, truth, num_classes);
  return r;
}

}  // namespace cpga
