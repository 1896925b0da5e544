#include "cpga/domains.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cpga/errors.hpp"
#include "cpga/random.hpp"

namespace cpga {

DistributionKind parse_distribution_kind(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "flt") return DistributionKind::kForwardLongTail;
  if (lower == "blt") return DistributionKind::kBackwardLongTail;
  if (lower == "bal") return DistributionKind::kBalanced;
  throw InvalidArgument("unknown class distribution '" + std::string(s) +
                        "' (expected FLT, BLT or Bal)");
}

std::string to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::kForwardLongTail:
      return "FLT";
    case DistributionKind::kBackwardLongTail:
      return "BLT";
    case DistributionKind::kBalanced:
      return "Bal";
  }
  return "?";
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t label : y) ++counts.at(label);
  return counts;
}

std::vector<std::size_t> sample_class_counts(const ClassDistributionSpec& spec,
                                             std::size_t num_classes, std::size_t n_max) {
  if (num_classes < 2) throw InvalidArgument("need at least two classes");
  if (n_max == 0) throw InvalidArgument("n_max must be positive");
  if (spec.kind == DistributionKind::kBalanced) return std::vector<std::size_t>(num_classes, n_max);
  if (!(spec.mu >= 1.0)) throw InvalidArgument("imbalance ratio mu must be >= 1");
  if (static_cast<double>(n_max) < spec.mu) {
    throw InvalidArgument("n_max (" + std::to_string(n_max) + ") is smaller than mu; the " +
                          "smallest class would be empty");
  }
  std::vector<std::size_t> counts(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double n = static_cast<double>(n_max) * std::pow(spec.mu, -static_cast<double>(k) / last);
    counts[k] = static_cast<std::size_t>(std::llround(n));
  }
  if (spec.kind == DistributionKind::kBackwardLongTail) std::reverse(counts.begin(), counts.end());
  return counts;
}

namespace {

struct PlaneRotation {
  std::vector<std::pair<std::size_t, std::size_t>> planes;
  double cos_t = 1.0;
  double sin_t = 0.0;

  void apply(std::span<double> v) const {
    for (const auto& [a, b] : planes) {
      const double xa = v[a];
      const double xb = v[b];
      v[a] = cos_t * xa - sin_t * xb;
      v[b] = sin_t * xa + cos_t * xb;
    }
  }
};

LabeledDataset draw_domain(Rng& rng, const Tensor& means, const std::vector<std::size_t>& counts,
                           double sigma, const PlaneRotation* rotation,
                           const std::vector<double>* translation, std::string tag) {
  const std::size_t num_classes = means.rows();
  const std::size_t dim = means.cols();
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;

  LabeledDataset d;
  d.x = Tensor::zeros(n, dim);
  d.y.reserve(n);
  d.num_classes = num_classes;
  d.domain_tag = std::move(tag);

  std::size_t row = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      auto v = d.x.row(row);
      for (std::size_t j = 0; j < dim; ++j) v[j] = means(k, j) + rng.normal(0.0, sigma);
      if (rotation != nullptr) rotation->apply(v);
      if (translation != nullptr) {
        for (std::size_t j = 0; j < dim; ++j) v[j] += (*translation)[j];
      }
      d.y.push_back(k);
    }
  }

  const std::vector<std::size_t> order = rng.permutation(n);
  LabeledDataset shuffled = d;
  shuffled.x = d.x.select_rows(order);
  for (std::size_t i = 0; i < n; ++i) shuffled.y[i] = d.y[order[i]];
  return shuffled;
}

}  // namespace

DomainPair generate_domain_pair(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                                const std::vector<std::size_t>& counts_source,
                                const std::vector<std::size_t>& counts_target,
                                const DomainShiftSpec& shift) {
  if (num_classes < 1 || dim < 1) throw InvalidArgument("class count and dimension must be positive");
  if (counts_source.size() != num_classes || counts_target.size() != num_classes) {
    throw InvalidArgument("class count lists must have one entry per class");
  }
  if (!(shift.noise_sigma_source > 0.0) || !(shift.noise_sigma_target > 0.0)) {
    throw InvalidArgument("noise sigmas must be positive");
  }
  if (!(shift.mean_separation > 0.0)) throw InvalidArgument("mean separation must be positive");
  if (!(shift.translation_scale >= 0.0)) throw InvalidArgument("translation scale must be >= 0");

  Rng rng(seed);

  Tensor means = Tensor::zeros(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto m = means.row(k);
    double norm = 0.0;
    while (norm == 0.0) {
      for (double& v : m) v = rng.normal();
      norm = 0.0;
      for (double v : m) norm += v * v;
      norm = std::sqrt(norm);
    }
    for (double& v : m) v *= shift.mean_separation / norm;
  }

  PlaneRotation rotation;
  rotation.cos_t = std::cos(shift.rotation_angle);
  rotation.sin_t = std::sin(shift.rotation_angle);
  const std::vector<std::size_t> axes = rng.permutation(dim);
  for (std::size_t i = 0; i + 1 < dim; i += 2) rotation.planes.emplace_back(axes[i], axes[i + 1]);

  std::vector<double> translation(dim, 0.0);
  {
    double norm = 0.0;
    for (double& v : translation) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : translation) v = norm > 0.0 ? v * shift.translation_scale / norm : 0.0;
  }

  DomainPair pair;
  pair.source_means = means;
  pair.target_means = means;
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto m = pair.target_means.row(k);
    rotation.apply(m);
    for (std::size_t j = 0; j < dim; ++j) m[j] += translation[j];
  }

  Rng source_rng = rng.fork(1);
  Rng target_rng = rng.fork(2);
  pair.source = draw_domain(source_rng, means, counts_source, shift.noise_sigma_source, nullptr,
                            nullptr, "source");
  pair.target = draw_domain(target_rng, means, counts_target, shift.noise_sigma_target, &rotation,
                            &translation, "target");
  return pair;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

void write_dataset_csv(const LabeledDataset& data, std::ostream& out) {
  const std::size_t dim = data.x.cols();
  std::string line;
  for (std::size_t j = 0; j < dim; ++j) {
    line += "f" + std::to_string(j) + ",";
  }
  line += "label\n";
  out << line;
  for (std::size_t i = 0; i < data.size(); ++i) {
    line.clear();
    for (double v : data.x.row(i)) {
      append_double(line, v);
      line += ',';
    }
    line += std::to_string(data.y[i]);
    line += '\n';
    out << line;
  }
}

void save_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_dataset_csv(data, out);
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

LabeledDataset read_dataset_csv(std::istream& in, std::size_t num_classes) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header.back() != "label") {
    throw ParseError("header must be f0,...,f{d-1},label", line_no);
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j] != "f" + std::to_string(j)) {
      throw ParseError("unexpected header column '" + std::string(header[j]) + "'", line_no);
    }
  }

  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != dim + 1) {
      throw ParseError("expected " + std::to_string(dim + 1) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      const auto f = fields[j];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric feature '" + std::string(f) + "'", line_no);
      }
      values.push_back(v);
    }
    std::size_t label = 0;
    const auto f = fields[dim];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), label);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
      throw ParseError("invalid label '" + std::string(f) + "'", line_no);
    }
    if (num_classes != 0 && label >= num_classes) {
      throw ParseError("label " + std::to_string(label) + " >= class count " +
                           std::to_string(num_classes),
                       line_no);
    }
    labels.push_back(label);
  }

  LabeledDataset d;
  const std::size_t n = labels.size();
  d.x = Tensor({n, dim}, std::move(values));
  d.y = std::move(labels);
  if (num_classes == 0) {
    for (std::size_t label : d.y) num_classes = std::max(num_classes, label + 1);
  }
  d.num_classes = num_classes;
  return d;
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open dataset " + path.string());
  LabeledDataset d = read_dataset_csv(in, num_classes);
  d.domain_tag = path.stem().string();
  return d;
}

}  // namespace cpga
