#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpga/tensor.hpp"

namespace cpga {

enum class DistributionKind { kForwardLongTail, kBackwardLongTail, kBalanced };

// "FLT", "BLT", "Bal" (case-insensitive on input).
DistributionKind parse_distribution_kind(std::string_view s);
std::string to_string(DistributionKind kind);

struct ClassDistributionSpec {
  DistributionKind kind = DistributionKind::kBalanced;
  double mu = 1.0;  // N_max / N_min; ignored for kBalanced
};

struct DomainShiftSpec {
  double rotation_angle = 0.0;  // radians
  double translation_scale = 0.0;
  double noise_sigma_source = 1.0;
  double noise_sigma_target = 1.0;
  double mean_separation = 1.0;
};

struct LabeledDataset {
  Tensor x;                        // n×d_in
  std::vector<std::size_t> y;      // n labels in [0, num_classes)
  std::size_t num_classes = 0;
  std::string domain_tag;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
    return a.x == b.x && a.y == b.y && a.num_classes == b.num_classes;
  }
};

// Per-class sample counts. FLT: round(n_max · mu^(−k/(K−1))); BLT: FLT
// reversed; Bal: n_max everywhere. Throws InvalidArgument for K < 2,
// mu < 1 or n_max < mu.
std::vector<std::size_t> sample_class_counts(const ClassDistributionSpec& spec,
                                             std::size_t num_classes, std::size_t n_max);

struct DomainPair {
  LabeledDataset source;
  LabeledDataset target;
  Tensor source_means;  // K×d_in population means
  Tensor target_means;  // R·mean + t
};

// Gaussian class clusters around shared random means; the target domain is
// rotated by the shift angle in floor(d_in/2) disjoint random coordinate
// planes and then translated. Fully determined by `seed`.
DomainPair generate_domain_pair(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                                const std::vector<std::size_t>& counts_source,
                                const std::vector<std::size_t>& counts_target,
                                const DomainShiftSpec& shift);

// CSV: header f0,...,f{d-1},label; LF line endings. Values are written in
// shortest round-trip form so load(save(D)) == D exactly.
void save_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path);
void write_dataset_csv(const LabeledDataset& data, std::ostream& out);

// Throws ParseError naming the offending line. When num_classes is 0 it is
// inferred as max(label)+1.
LabeledDataset load_dataset_csv(const std::filesystem::path& path, std::size_t num_classes = 0);
LabeledDataset read_dataset_csv(std::istream& in, std::size_t num_classes = 0);

}  // namespace cpga
