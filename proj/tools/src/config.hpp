#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpga/adaptation.hpp"
#include "cpga/domains.hpp"
#include "cpga/prototype_generation.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tcpga.hpp"

namespace cpga::cli {

// Bad config file, unknown key, malformed override. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { kCpga, kTcpga };

Method parse_method(const std::string& s);
std::string to_string(Method m);

struct DomainCounts {
  ClassDistributionSpec distribution;
  std::size_t n_max = 500;
};

struct DatasetConfig {
  std::size_t num_classes = 8;
  std::size_t input_dim = 16;
  DomainCounts source{{DistributionKind::kForwardLongTail, 100.0}, 500};
  DomainCounts target{{DistributionKind::kBackwardLongTail, 100.0}, 500};
  double rotation_deg = 30.0;
  DomainShiftSpec shift{0.0, 1.0, 1.0, 1.0, 5.0};  // rotation_angle is filled from rotation_deg
  // When set, these CSVs replace the generated domains.
  std::optional<std::filesystem::path> source_path;
  std::optional<std::filesystem::path> target_path;

  DomainShiftSpec resolved_shift() const;
};

struct OracleConfig {
  bool from_file = false;
  double accuracy = 0.85;
  double smoothing = 0.2;
  std::optional<std::filesystem::path> path;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "cpga-run";
  DatasetConfig dataset;
  SourceTrainConfig source;
  Stage1Config stage1;
  Method method = Method::kCpga;
  TcpgaConfig stage2;
  OracleConfig oracle;
  // Directory holding a previously trained source model and generator.
  std::optional<std::filesystem::path> source_model_dir;
};

// Parses YAML text. Each `key.path=value` override is applied before
// validation. Unknown keys anywhere raise ConfigError.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

// Serializes every field, so parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& cfg);

// Relative output directories are placed under $CPGA_OUTPUT_ROOT when set.
std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

}  // namespace cpga::cli
