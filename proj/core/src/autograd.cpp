#include "cpga/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"

namespace cpga {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw InvalidState("use of an unbound Var");
  return tape_->value(*this);
}

Var Tape::constant(Tensor value) {
  return record("constant", std::move(value), false, nullptr);
}

Var Tape::param(Tensor& parameter) {
  if (auto it = param_ids_.find(&parameter); it != param_ids_.end()) return Var(this, it->second);
  Var v = record("param", parameter, true, nullptr);
  nodes_[v.id()].param = &parameter;
  param_ids_.emplace(&parameter, v.id());
  return v;
}

Var Tape::record(std::string_view op, Tensor value, bool requires_grad, Backprop backprop) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(backprop), nullptr, requires_grad});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw InvalidState("variable was not recorded on this tape");
  }
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

std::vector<double> Tape::grad(const Var& v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return std::vector<double>(n.value.numel(), 0.0);
  return n.grad;
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::backward(const Var& loss) {
  check_owned(loss);
  if (nodes_[loss.id()].value.numel() != 1) {
    throw InvalidArgument("backward requires a scalar loss, got " +
                          nodes_[loss.id()].value.shape_string());
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad || !n.backprop) continue;
    n.backprop(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr) continue;
    if (!n.param->has_grad()) n.param->enable_grad();
    if (n.grad.empty()) {
      n.param->zero_grad();
    } else {
      std::copy(n.grad.begin(), n.grad.end(), n.param->grad().begin());
    }
  }
}

namespace ag {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw InvalidState("operands recorded on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw InvalidState("use of an unbound Var");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                          b.shape_string());
  }
}

// Applies an elementwise map with derivative `dfdx(x, y)`.
template <typename F, typename D>
Var unary(const char* op, const Var& x, F f, D dfdx) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v = f(v);
  const std::size_t xi = x.id();
  return t.record(op, std::move(out), t.requires_grad(xi), [xi, dfdx](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const auto xv = tp.node_value(xi).data();
    const auto yv = tp.node_value(self).data();
    auto& gx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) {
    throw InvalidArgument("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += aip * bv(p, j);
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  const bool rg = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record("matmul", std::move(out), rg, [ai, bi, n, k, m](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const Tensor& A = tp.node_value(ai);
    const Tensor& B = tp.node_value(bi);
    if (tp.requires_grad(ai)) {
      auto& ga = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * B(p, j);
          ga[i * k + p] += s;
        }
    }
    if (tp.requires_grad(bi)) {
      auto& gb = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A(i, p);
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
        }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  if (bv.cols() != k) {
    throw InvalidArgument("matmul_nt: " + av.shape_string() + " x " + bv.shape_string() + "^T");
  }
  Tensor out = Tensor::zeros(n, m);
  const double* ap = av.data().data();
  const double* bp = bv.data().data();
  double* op = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ap + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = bp + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      op[i * m + j] = s;
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  const bool rg = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record("matmul_nt", std::move(out), rg, [ai, bi, n, k, m](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const Tensor& A = tp.node_value(ai);
    const Tensor& B = tp.node_value(bi);
    const bool need_a = tp.requires_grad(ai);
    const bool need_b = tp.requires_grad(bi);
    double* ga = need_a ? tp.grad_buffer(ai).data() : nullptr;
    double* gb = need_b ? tp.grad_buffer(bi).data() : nullptr;
    const double* ap = A.data().data();
    const double* bp = B.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g[i * m + j];
        if (gij == 0.0) continue;
        if (need_a) {
          double* dst = ga + i * k;
          const double* src = bp + j * k;
          for (std::size_t p = 0; p < k; ++p) dst[p] += gij * src[p];
        }
        if (need_b) {
          double* dst = gb + j * k;
          const double* src = ap + i * k;
          for (std::size_t p = 0; p < k; ++p) dst[p] += gij * src[p];
        }
      }
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& t = same_tape(x, bias);
  const Tensor& bv = bias.value();
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  if (bv.rows() != 1 || bv.cols() != m) {
    throw InvalidArgument("add_bias: bias " + bv.shape_string() + " for input " +
                          out.shape_string());
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) += bv[j];
  const std::size_t xi = x.id(), bi = bias.id();
  const bool rg = t.requires_grad(xi) || t.requires_grad(bi);
  return t.record("add_bias", std::move(out), rg, [xi, bi, n, m](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    if (tp.requires_grad(xi)) {
      auto& gx = tp.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      auto& gb = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

Var scale_cols(const Var& x, const Var& scale) {
  Tape& t = same_tape(x, scale);
  const Tensor& sv = scale.value();
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  if (sv.rows() != 1 || sv.cols() != m) {
    throw InvalidArgument("scale_cols: scale " + sv.shape_string() + " for input " +
                          out.shape_string());
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) *= sv[j];
  const std::size_t xi = x.id(), si = scale.id();
  const bool rg = t.requires_grad(xi) || t.requires_grad(si);
  return t.record("scale_cols", std::move(out), rg, [xi, si, n, m](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const Tensor& X = tp.node_value(xi);
    const Tensor& S = tp.node_value(si);
    if (tp.requires_grad(xi)) {
      auto& gx = tp.grad_buffer(xi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[i * m + j] * S[j];
    }
    if (tp.requires_grad(si)) {
      auto& gs = tp.grad_buffer(si);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gs[j] += g[i * m + j] * X(i, j);
    }
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const bool rg = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record("add", std::move(out), rg, [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!tp.requires_grad(id)) continue;
      auto& gi = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  const bool rg = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record("mul", std::move(out), rg, [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const auto av = tp.node_value(ai).data();
    const auto bv2 = tp.node_value(bi).data();
    if (tp.requires_grad(ai)) {
      auto& ga = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(bi)) {
      auto& gb = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var affine(const Var& x, double scale, double shift) {
  return unary(
      "affine", x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Var relu(const Var& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericError("log of a non-positive value");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var exp(const Var& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var clamp_min(const Var& x, double lo) {
  return unary(
      "clamp_min", x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Var softmax_rows(const Var& x, double temperature) {
  Tape& t = tape_of(x);
  Tensor out = cpga::softmax_rows(x.value(), temperature);
  const std::size_t xi = x.id();
  const std::size_t n = out.rows(), m = out.cols();
  return t.record("softmax_rows", std::move(out), t.requires_grad(xi),
                  [xi, n, m, temperature](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    const auto y = tp.node_value(self).data();
                    auto& gx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < n; ++i) {
                      double gy = 0.0;
                      for (std::size_t j = 0; j < m; ++j) gy += g[i * m + j] * y[i * m + j];
                      for (std::size_t j = 0; j < m; ++j) {
                        gx[i * m + j] += y[i * m + j] * (g[i * m + j] - gy) / temperature;
                      }
                    }
                  });
}

Var log_softmax_rows(const Var& x, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax temperature must be positive");
  Tape& t = tape_of(x);
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : row) s += std::exp((v - mx) / temperature);
    const double lse = std::log(s);
    for (double& v : row) v = (v - mx) / temperature - lse;
  }
  const std::size_t xi = x.id();
  return t.record("log_softmax_rows", std::move(out), t.requires_grad(xi),
                  [xi, n, m, temperature](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    const auto y = tp.node_value(self).data();
                    auto& gx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < n; ++i) {
                      double gs = 0.0;
                      for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
                      for (std::size_t j = 0; j < m; ++j) {
                        gx[i * m + j] += (g[i * m + j] - std::exp(y[i * m + j]) * gs) / temperature;
                      }
                    }
                  });
}

Var l2_normalize_rows(const Var& x) {
  constexpr double kMinNorm = 1e-12;
  Tape& t = tape_of(x);
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    norms[i] = std::max(l2_norm(row), kMinNorm);
    for (double& v : row) v /= norms[i];
  }
  const std::size_t xi = x.id();
  return t.record("l2_normalize_rows", std::move(out), t.requires_grad(xi),
                  [xi, n, m, norms = std::move(norms)](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    const auto y = tp.node_value(self).data();
                    auto& gx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < n; ++i) {
                      double yg = 0.0;
                      for (std::size_t j = 0; j < m; ++j) yg += y[i * m + j] * g[i * m + j];
                      for (std::size_t j = 0; j < m; ++j) {
                        gx[i * m + j] += (g[i * m + j] - y[i * m + j] * yg) / norms[i];
                      }
                    }
                  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  Tape& t = tape_of(table);
  Tensor out = table.value().select_rows(indices);
  const std::size_t ti = table.id();
  const std::size_t m = out.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.record("gather_rows", std::move(out), t.requires_grad(ti),
                  [ti, m, idx = std::move(idx)](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    auto& gt = tp.grad_buffer(ti);
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t j = 0; j < m; ++j) gt[idx[i] * m + j] += g[i * m + j];
                  });
}

Var take(const Var& x, std::span<const std::size_t> columns, std::size_t per_row) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (per_row == 0 || columns.size() != n * per_row) {
    throw InvalidArgument("take: index count does not match rows x per_row");
  }
  Tensor out = Tensor::zeros(n, per_row);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < per_row; ++j) {
      const std::size_t c = columns[i * per_row + j];
      if (c >= m) throw InvalidArgument("take: column index out of range");
      out(i, j) = xv(i, c);
    }
  }
  const std::size_t xi = x.id();
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return t.record("take", std::move(out), t.requires_grad(xi),
                  [xi, n, m, per_row, cols = std::move(cols)](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    auto& gx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < per_row; ++j)
                        gx[i * m + cols[i * per_row + j]] += g[i * per_row + j];
                  });
}

Var row_sum(const Var& x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out = Tensor::zeros(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += xv(i, j);
  const std::size_t xi = x.id();
  return t.record("row_sum", std::move(out), t.requires_grad(xi),
                  [xi, n, m](Tape& tp, std::size_t self) {
                    const auto g = tp.node_grad(self);
                    auto& gx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[i];
                  });
}

Var row_dot(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out = Tensor::zeros(n, 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = dot(av.row(i), bv.row(i));
  const std::size_t ai = a.id(), bi = b.id();
  const bool rg = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record("row_dot", std::move(out), rg, [ai, bi, n, m](Tape& tp, std::size_t self) {
    const auto g = tp.node_grad(self);
    const auto A = tp.node_value(ai).data();
    const auto B = tp.node_value(bi).data();
    if (tp.requires_grad(ai)) {
      auto& ga = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i] * B[i * m + j];
    }
    if (tp.requires_grad(bi)) {
      auto& gb = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[i * m + j] += g[i] * A[i * m + j];
    }
  });
}

Var sum(const Var& x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xi = x.id();
  return t.record("sum", Tensor::scalar(s), t.requires_grad(xi), [xi](Tape& tp, std::size_t self) {
    const double g = tp.node_grad(self)[0];
    for (double& v : tp.grad_buffer(xi)) v += g;
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw InvalidArgument("mean of an empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(n), 0.0);
}

}  // namespace ag
}  // namespace cpga
