#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "vrepair/encoding.hpp"
#include "vrepair/micronet.hpp"
#include "vrepair/mining.hpp"
#include "vrepair/training.hpp"

namespace vrepair::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncodingSection {
  std::size_t vocab_size = 5000;
  double cwe_coverage = 0.8;
  LocalizationMode localization_mode = LocalizationMode::kFirstLine;
  encoding::NoiseConfig noise;
};

struct InferSection {
  std::size_t beam_width = 50;
  std::size_t max_len = 100;
};

/// Every section is optional; missing keys keep their defaults and unknown
/// keys are rejected.
struct PipelineConfig {
  int context_size = 3;
  mining::Keywords keywords;
  mining::LengthLimits limits;
  EncodingSection encoding;
  micronet::ModelConfig model;
  training::TrainConfig train;
  training::SplitSpec split;
  InferSection infer;
  std::uint64_t seed = 0;

  /// Applies `seed` to the split, training and noise streams.
  void reseed(std::uint64_t root);
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
nlohmann::json to_json(const PipelineConfig& config);

}  // namespace vrepair::config
