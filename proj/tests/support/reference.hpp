#pragma once

// Straight-loop re-implementations used as independent oracles. They share no
// code with the library beyond the Tensor container.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "cpga/tensor.hpp"

namespace cpga::ref {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  if (c > 1) c = 1;
  if (c < -1) c = -1;
  return c;
}

inline Matrix init_centroids(const Matrix& q, const Matrix& soft) {
  const std::size_t n = q.size(), d = q[0].size(), k = soft[0].size();
  Matrix c(k, std::vector<double>(d, 0.0));
  for (std::size_t cls = 0; cls < k; ++cls) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) w += soft[i][cls];
    if (w == 0) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) c[cls][j] += q[i][j] / static_cast<double>(n);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) c[cls][j] += soft[i][cls] * q[i][j];
    for (std::size_t j = 0; j < d; ++j) c[cls][j] /= w;
  }
  return c;
}

inline Matrix update_centroids(const Matrix& q, const std::vector<std::size_t>& hard,
                               const Matrix& previous) {
  Matrix c = previous;
  for (std::size_t cls = 0; cls < previous.size(); ++cls) {
    std::size_t count = 0;
    std::vector<double> s(q[0].size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (hard[i] != cls) continue;
      ++count;
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += q[i][j];
    }
    if (count == 0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) c[cls][j] = s[j] / static_cast<double>(count);
  }
  return c;
}

inline Matrix pseudo_soft(const Matrix& q, const Matrix& c, double tau) {
  Matrix out(q.size(), std::vector<double>(c.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    double mx = -1e300;
    for (std::size_t k = 0; k < c.size(); ++k) {
      out[i][k] = cosine(q[i], c[k]) / tau;
      if (out[i][k] > mx) mx = out[i][k];
    }
    double z = 0;
    for (std::size_t k = 0; k < c.size(); ++k) z += std::exp(out[i][k] - mx);
    for (std::size_t k = 0; k < c.size(); ++k) out[i][k] = std::exp(out[i][k] - mx) / z;
  }
  return out;
}

inline std::vector<std::size_t> row_argmax(const Matrix& m) {
  std::vector<std::size_t> out;
  for (const auto& row : m) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out.push_back(best);
  }
  return out;
}

inline std::vector<double> confidence(const Matrix& q, const Matrix& c,
                                      const std::vector<std::size_t>& hard, double tau) {
  std::vector<double> w;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double num = 0, den = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double e = std::exp(cosine(q[i], c[k]) / tau);
      den += e;
      if (k == hard[i]) num = e;
    }
    w.push_back(num / den);
  }
  return w;
}

struct Accuracy {
  double overall;
  double per_class;
};

inline Accuracy accuracies(const std::vector<std::size_t>& pred,
                           const std::vector<std::size_t>& truth, std::size_t k) {
  double correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  double recall_sum = 0;
  std::size_t present = 0;
  for (std::size_t cls = 0; cls < k; ++cls) {
    double total = 0, hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != cls) continue;
      total += 1;
      if (pred[i] == cls) hit += 1;
    }
    if (total == 0) continue;
    recall_sum += hit / total;
    ++present;
  }
  return {correct / static_cast<double>(pred.size()), recall_sum / static_cast<double>(present)};
}

inline double d_pdd(const std::vector<std::size_t>& pseudo, const std::vector<std::size_t>& truth,
                    std::size_t k) {
  double total = 0;
  for (std::size_t cls = 0; cls < k; ++cls) {
    double np = 0, nt = 0;
    for (std::size_t l : pseudo) np += l == cls ? 1 : 0;
    for (std::size_t l : truth) nt += l == cls ? 1 : 0;
    total += std::abs(np - nt) / nt;
  }
  return total;
}

// Random helpers for property tests.
inline Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor random_simplex_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::exponential_distribution<double> dist(1.0);
  Tensor t = Tensor::zeros(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (double& v : t.row(i)) s += (v = dist(rng));
    for (double& v : t.row(i)) v /= s;
  }
  return t;
}

inline std::vector<std::size_t> random_labels(std::mt19937_64& rng, std::size_t n,
                                              std::size_t k) {
  std::uniform_int_distribution<std::size_t> dist(0, k - 1);
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = dist(rng);
  return y;
}

}  // namespace cpga::ref
