#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cpga {

struct EvalReport {
  double overall_acc = 0.0;
  // Unweighted mean of the recalls of classes that occur in the truth.
  double per_class_acc = 0.0;
  // Recall per class; nullopt for classes absent from the truth.
  std::vector<std::optional<double>> class_recalls;
  std::optional<double> d_pdd;
};

// Throws InvalidArgument on empty or mismatched inputs or out-of-range labels.
EvalReport accuracies(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                      std::size_t num_classes);

// Pseudo-label distribution discrepancy: Σ_k |n_pred(k) − n_true(k)| / n_true(k).
// Throws InvalidArgument when some class has no true sample.
double d_pdd(std::span<const std::size_t> pseudo, std::span<const std::size_t> truth,
             std::size_t num_classes);

// accuracies() plus d_pdd when every class occurs in the truth.
EvalReport evaluate(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                    std::size_t num_classes);

std::vector<std::size_t> label_histogram(std::span<const std::size_t> labels,
                                         std::size_t num_classes);

}  // namespace cpga
