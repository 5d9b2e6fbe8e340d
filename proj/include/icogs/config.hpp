#pragma once

#include <string>
#include <vector>

#include "icogs/trainer.hpp"

namespace icogs {

enum class InitMode { kPerturbed, kRandomDepth };

struct InitConfig {
  InitMode mode = InitMode::kPerturbed;
  int points = 2000;
  double noise = 0.3;     // world-space sigma for kPerturbed
  double depth_min = 0.0; // kRandomDepth range; 0 derives it from the data
  double depth_max = 0.0;
};

/// Everything `train` needs. Every field has a default, so "{}" is valid.
struct RunConfig {
  std::string dataset;
  std::string output = "run";
  int image_size = 0;   // 0 accepts the dataset's size; otherwise it must match
  std::string features; // directory of view_{id}.icof files; empty uses the built-in descriptor
  InitConfig init;
  TrainConfig train;
};

/// Parses a JSON document (empty text means "{}") and applies `key=value`
/// overrides with dotted keys. Unknown keys are rejected with their names
/// listed. Throws ConfigError.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});

/// Reads the file (empty path means defaults) and applies overrides.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// The fully expanded document, including defaults.
std::string dump_run_config(const RunConfig& config);

} // namespace icogs
