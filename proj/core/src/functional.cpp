#include "cpga/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpga/errors.hpp"

namespace cpga {

Tensor softmax_rows(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax temperature must be positive");
  Tensor out = logits;
  const std::size_t n = out.rows();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp((v - mx) / temperature);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine similarity of a zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Tensor normalize_rows(const Tensor& x) {
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = l2_norm(row);
    if (n == 0.0) throw DegenerateInput("cannot normalize a zero-norm row");
    for (double& v : row) v /= n;
  }
  return out;
}

std::size_t argmax(std::span<const double> row) {
  if (row.empty()) throw InvalidArgument("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> argmax_rows(const Tensor& x) {
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = argmax(x.row(r));
  return out;
}

double top2_margin(std::span<const double> row) {
  if (row.size() < 2) throw InvalidArgument("top-2 margin needs at least two entries");
  const std::size_t k1 = argmax(row);
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i != k1) second = std::max(second, row[i]);
  }
  return row[k1] - second;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Tensor out = Tensor::zeros(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidArgument("label out of range in one_hot");
    out(i, labels[i]) = 1.0;
  }
  return out;
}

}  // namespace cpga
