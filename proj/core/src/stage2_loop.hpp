#pragma once

#include <optional>
#include <span>

#include "cpga/adaptation.hpp"
#include "cpga/tcpga.hpp"

namespace cpga::detail {

struct Stage2Options {
  CpgaConfig config;
  // Non-null selects the target-aware variant (ensemble pseudo labels,
  // max-probability weights, target classifier).
  const ZeroShotOracle* oracle = nullptr;
  bool update_source_classifier = false;
};

struct Stage2Outcome {
  FeatureExtractor extractor;
  Projector projector;
  WeightNormClassifier classifier;
  std::optional<TargetClassifier> target_classifier;
  AdaptationReport report;
};

Stage2Outcome run_stage2(const SourceModel& source, const PrototypeGenerator& generator,
                         const Tensor& target_x, const Stage2Options& options,
                         std::span<const std::size_t> eval_labels);

}  // namespace cpga::detail
