#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "cpga/adaptation.hpp"
#include "cpga/domains.hpp"
#include "cpga/prototype_generation.hpp"
#include "cpga/source_model.hpp"
#include "cpga/tcpga.hpp"

namespace cpga::cli {

struct Domains {
  LabeledDataset source;
  LabeledDataset target;
};

// Generated from the config seed, or loaded from the configured CSV paths.
Domains make_domains(const ExperimentConfig& cfg);
void save_domains(const Domains& d, const std::filesystem::path& dir);

struct TrainedSource {
  SourceModel model;
  PrototypeGenerator generator;
};

TrainedSource train_source_stage(const ExperimentConfig& cfg, const LabeledDataset& source);
void save_source_stage(const TrainedSource& s, const std::filesystem::path& dir);
TrainedSource load_source_stage(const std::filesystem::path& dir);

ZeroShotOracle make_oracle(const ExperimentConfig& cfg, const LabeledDataset& target);

struct SummaryRow {
  std::string method;
  std::string shift;  // e.g. FLT-BLT
  double mu = 1.0;
  double overall_acc = 0.0;
  double per_class_acc = 0.0;
  std::optional<double> d_pdd;
  std::uint64_t seed = 0;
};

std::string shift_label(const ExperimentConfig& cfg);
double shift_mu(const ExperimentConfig& cfg);

// method,shift,mu,overall_acc,per_class_acc,d_pdd,seed
void write_summary_header(std::ostream& out);
void write_summary_row(const SummaryRow& row, std::ostream& out);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

struct AdaptationRun {
  SummaryRow summary;
  AdaptationReport report;
  FeatureExtractor extractor;
  Projector projector;
  WeightNormClassifier classifier;
  std::optional<TargetClassifier> target_classifier;
};

AdaptationRun run_adaptation(const ExperimentConfig& cfg, const Domains& domains, const TrainedSource& trained);
void save_adaptation(const AdaptationRun& run, const std::filesystem::path& dir);

// Evaluates the models stored in `model_dir`: an adapted run when it holds
// target_head.model, otherwise the source-only model.
SummaryRow evaluate_models(const ExperimentConfig& cfg, const std::filesystem::path& model_dir,
                           const LabeledDataset& target);

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<std::pair<DistributionKind, DistributionKind>> shifts;
  std::vector<double> mus;
  std::vector<std::uint64_t> seeds;
};

// Parses "FLT-BLT" style labels.
std::pair<DistributionKind, DistributionKind> parse_shift(const std::string& s);

// Runs every cell of methods × shifts × mus × seeds. Source models are
// trained once per (source distribution, mu, seed) and reused.
std::vector<SummaryRow> run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                                  const std::filesystem::path& out_dir);

}  // namespace cpga::cli
