#pragma once

// Flat key=value run configuration covering every tunable in the pipeline.
// Lines are `key = value`; `#` starts a comment; unknown or repeated keys are
// errors. serialize_run_config emits every key, and parsing its output
// reproduces the same RunConfig.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ultra/data.hpp"
#include "ultra/metrics.hpp"
#include "ultra/model.hpp"
#include "ultra/trainer.hpp"

namespace ultra {

struct RunConfig {
  data::GeneratorConfig generator;
  std::size_t dataset_count = 2500;
  std::string dataset_path;  // empty: generate in memory from `generator`
  data::SplitFractions split{0.8, 0.2, 0.0};
  std::uint64_t split_seed = 5;
  UltraConfig model;  // input size follows generator.height / width
  TrainConfig train;
  metrics::EvalOptions eval;
  std::string checkpoint_path = "ultra_best.ultc";
  std::string last_checkpoint_path = "ultra_last.ultc";
  std::string log_path = "train_log.csv";

  /// Cross-module validation; throws ConfigError.
  void validate() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& config);

/// Model configuration with the input size taken from the generator.
UltraConfig resolved_model_config(const RunConfig& config);

/// Applies one `key=value` assignment (used for CLI overrides).
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// All recognized keys, in serialization order.
std::vector<std::string> config_keys();

std::string to_string(metrics::IccForm form);
std::string to_string(metrics::KappaWeighting weighting);
std::string to_string(LossMode mode);
metrics::IccForm parse_icc_form(std::string_view text);
metrics::KappaWeighting parse_kappa_weighting(std::string_view text);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace ultra
