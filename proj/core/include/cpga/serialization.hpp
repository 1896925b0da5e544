#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cpga/nn.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tensor.hpp"

namespace cpga {

// Versioned flat text format shared by every model component:
//
//   cpga-model 1
//   kind <name>
//   dims <d0> <d1> ...
//   tensor <name> <rows> <cols>
//   <row-major values, space separated>
//   ...
//
// Values use shortest round-trip decimal form, so a reload is bit-exact.
struct ModelFile {
  std::string kind;
  std::vector<std::size_t> dims;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

inline constexpr int kModelFormatVersion = 1;

void write_model(const ModelFile& model, std::ostream& out);
// Throws ParseError with the offending line number.
ModelFile read_model(std::istream& in);
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

ModelFile to_model_file(const Mlp& mlp, std::string kind = "mlp");
Mlp mlp_from_model_file(const ModelFile& file);

ModelFile to_model_file(const WeightNormClassifier& classifier);
WeightNormClassifier classifier_from_model_file(const ModelFile& file);

}  // namespace cpga
