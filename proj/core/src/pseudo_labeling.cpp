#include <algorithm>
#include <cmath>

#include "cpga/adaptation.hpp"
#include "cpga/errors.hpp"
#include "cpga/functional.hpp"

namespace cpga {

namespace {

Tensor global_mean(const Tensor& features) {
  Tensor mean = Tensor::zeros(1, features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i)
    for (std::size_t j = 0; j < features.cols(); ++j) mean[j] += features(i, j);
  for (double& v : mean.data()) v /= static_cast<double>(features.rows());
  return mean;
}

}  // namespace

Tensor init_centroids(const Tensor& features, const Tensor& soft_predictions,
                      std::vector<std::size_t>* empty_classes) {
  const std::size_t n = features.rows(), d = features.cols(), k = soft_predictions.cols();
  if (soft_predictions.rows() != n) {
    throw InvalidArgument("soft predictions must have one row per feature");
  }
  if (n == 0) throw InvalidArgument("centroids need at least one feature");
  Tensor c = Tensor::zeros(k, d);
  std::vector<double> weight(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double w = soft_predictions(i, a);
      weight[a] += w;
      for (std::size_t j = 0; j < d; ++j) c(a, j) += w * features(i, j);
    }
  }
  Tensor mean;
  for (std::size_t a = 0; a < k; ++a) {
    if (weight[a] > 0.0) {
      for (double& v : c.row(a)) v /= weight[a];
      continue;
    }
    if (mean.empty()) mean = global_mean(features);
    std::copy(mean.data().begin(), mean.data().end(), c.row(a).begin());
    if (empty_classes != nullptr) empty_classes->push_back(a);
  }
  return c;
}

Tensor update_centroids(const Tensor& features, std::span<const std::size_t> hard_labels,
                        const Tensor& previous) {
  const std::size_t n = features.rows(), d = features.cols(), k = previous.rows();
  if (hard_labels.size() != n) throw InvalidArgument("one hard label per feature is required");
  if (previous.cols() != d) throw InvalidArgument("previous centroids have the wrong width");
  Tensor sums = Tensor::zeros(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = hard_labels[i];
    if (a >= k) throw InvalidArgument("hard label out of range");
    ++counts[a];
    for (std::size_t j = 0; j < d; ++j) sums(a, j) += features(i, j);
  }
  Tensor c = previous;
  for (std::size_t a = 0; a < k; ++a) {
    if (counts[a] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) c(a, j) = sums(a, j) / static_cast<double>(counts[a]);
  }
  return c;
}

namespace {

// n×K cosine similarities between features and centroids.
Tensor cosine_matrix(const Tensor& features, const Tensor& centroids) {
  if (features.cols() != centroids.cols()) {
    throw InvalidArgument("feature and centroid widths differ");
  }
  const Tensor qn = normalize_rows(features);
  const Tensor cn = normalize_rows(centroids);
  Tensor s = Tensor::zeros(features.rows(), centroids.rows());
  for (std::size_t i = 0; i < qn.rows(); ++i)
    for (std::size_t k = 0; k < cn.rows(); ++k) s(i, k) = std::clamp(dot(qn.row(i), cn.row(k)), -1.0, 1.0);
  return s;
}

}  // namespace

PseudoLabels pseudo_labels(const Tensor& features, const Tensor& centroids, double temperature) {
  PseudoLabels pl;
  pl.soft = softmax_rows(cosine_matrix(features, centroids), temperature);
  pl.hard = argmax_rows(pl.soft);
  return pl;
}

std::vector<double> confidence_weight(const Tensor& features, const Tensor& centroids,
                                      std::span<const std::size_t> hard_labels,
                                      double temperature) {
  if (hard_labels.size() != features.rows()) {
    throw InvalidArgument("one hard label per feature is required");
  }
  const Tensor soft = softmax_rows(cosine_matrix(features, centroids), temperature);
  std::vector<double> w(hard_labels.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (hard_labels[i] >= soft.cols()) throw InvalidArgument("hard label out of range");
    w[i] = soft(i, hard_labels[i]);
  }
  return w;
}

}  // namespace cpga
