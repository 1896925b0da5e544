#include <algorithm>
#include <cmath>

#include "cpga/adaptation.hpp"
#include "cpga/errors.hpp"
#include "cpga/functional.hpp"

namespace cpga {

namespace {

void require_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (std::abs(l2_norm(t.row(i)) - 1.0) > 1e-6) {
      throw InvalidArgument(std::string(what) + " row " + std::to_string(i) +
                            " is not unit-norm");
    }
  }
}

}  // namespace

Var weighted_infonce(const Var& anchors, const Var& prototypes,
                     std::span<const std::size_t> labels, std::span<const double> weights,
                     double temperature) {
  const std::size_t b = anchors.rows();
  const std::size_t k = prototypes.rows();
  if (labels.size() != b || weights.size() != b) {
    throw InvalidArgument("weighted InfoNCE needs one label and weight per anchor");
  }
  require_unit_rows(anchors.value(), "anchor");
  require_unit_rows(prototypes.value(), "prototype");
  for (std::size_t l : labels) {
    if (l >= k) throw InvalidArgument("pseudo label out of range for the prototype set");
  }
  Tape& tape = *anchors.tape();
  const Var logp = ag::log_softmax_rows(ag::matmul_nt(anchors, prototypes), temperature);
  const Var picked = ag::take(logp, labels, 1);
  const Var w = tape.constant(Tensor({b, 1}, std::vector<double>(weights.begin(), weights.end())));
  return ag::affine(ag::mean(ag::mul(picked, w)), -1.0, 0.0);
}

ElrBank::ElrBank(Tensor initial, double beta) : h_(std::move(initial)), beta_(beta) {
  // β = 1 is accepted here and freezes the bank; training configs still require β < 1.
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("ELR momentum must be in [0,1]");
}

void ElrBank::update(std::size_t i, std::span<const double> prediction) {
  auto row = h_.row(i);
  if (prediction.size() != row.size()) throw InvalidArgument("ELR prediction has the wrong width");
  for (std::size_t k = 0; k < row.size(); ++k) {
    row[k] = beta_ * row[k] + (1.0 - beta_) * prediction[k];
  }
}

Var elr_step(const Var& anchors, const Var& prototypes, ElrBank& bank,
             std::span<const std::size_t> indices, double temperature) {
  constexpr double kMinGap = 1e-12;
  if (indices.size() != anchors.rows()) throw InvalidArgument("one bank index per anchor");
  Tape& tape = *anchors.tape();
  const Var o = ag::softmax_rows(ag::matmul_nt(anchors, prototypes), temperature);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= bank.size()) throw InvalidArgument("ELR bank index out of range");
    bank.update(indices[r], o.value().row(r));
  }
  const Var h = tape.constant(bank.rows().select_rows(indices));
  const Var gap = ag::clamp_min(ag::affine(ag::row_dot(o, h), -1.0, 1.0), kMinGap);
  return ag::mean(ag::log(gap));
}

void FeatureBank::refresh(Tensor features) { q_ = std::move(features); }

void FeatureBank::update(std::span<const std::size_t> indices, const Tensor& features) {
  if (features.rows() != indices.size() || features.cols() != q_.cols()) {
    throw InvalidArgument("feature bank update has the wrong shape");
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= q_.rows()) throw InvalidArgument("feature bank index out of range");
    std::copy(features.row(r).begin(), features.row(r).end(), q_.row(indices[r]).begin());
  }
}

Var loss_nc(const Var& features, const FeatureBank& bank, std::span<const std::size_t> indices,
            double temperature) {
  const std::size_t n = bank.size();
  if (n < 2) throw InvalidArgument("neighborhood clustering needs a bank of at least two entries");
  if (indices.size() != features.rows()) throw InvalidArgument("one bank index per feature");
  Tape& tape = *features.tape();
  const Var qn = ag::l2_normalize_rows(features);
  const Var bn = ag::l2_normalize_rows(tape.constant(bank.rows()));
  const Var sims = ag::matmul_nt(qn, bn);

  std::vector<std::size_t> others;
  others.reserve(indices.size() * (n - 1));
  for (std::size_t self : indices) {
    if (self >= n) throw InvalidArgument("feature bank index out of range");
    for (std::size_t j = 0; j < n; ++j) {
      if (j != self) others.push_back(j);
    }
  }
  const Var s_logits = ag::take(sims, others, n - 1);
  const Var s = ag::softmax_rows(s_logits, temperature);
  const Var log_s = ag::log_softmax_rows(s_logits, temperature);
  return ag::affine(ag::mean(ag::row_sum(ag::mul(s, log_s))), -1.0, 0.0);
}

Tensor Projector::apply(const Tensor& x) const {
  Tape tape;
  return ag::l2_normalize_rows(mlp_.forward_frozen(tape, tape.constant(x))).value();
}

}  // namespace cpga
