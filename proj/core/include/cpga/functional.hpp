#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpga/tensor.hpp"

namespace cpga {

// Temperature softmax over each row, with max subtraction. Throws
// InvalidArgument for a non-positive temperature.
Tensor softmax_rows(const Tensor& logits, double temperature = 1.0);

// a·b / (‖a‖‖b‖), clamped to [-1, 1]. Throws DegenerateInput on a zero-norm
// argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// Copy of `x` with unit-norm rows. Throws DegenerateInput on a zero row.
Tensor normalize_rows(const Tensor& x);

// Index of the row maximum; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> row);
std::vector<std::size_t> argmax_rows(const Tensor& x);

// Largest minus second-largest entry. Requires at least two entries.
double top2_margin(std::span<const double> row);

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace cpga
