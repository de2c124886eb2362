#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "oeflow/data.hpp"
#include "oeflow/detector.hpp"
#include "oeflow/sweep.hpp"

namespace oeflow::cli {

/// Where a command's samples come from.
struct DataSource {
  std::string path;               // dataset file
  std::string synthetic;          // "default" or a synthetic manifest path
  std::uint64_t synthetic_seed = 7;
  SplitSpec split;
  bool split_seed_set = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataSource data;
  ReducerConfig reducer;
  DetectorConfig detector;
  bool lambda_set = false;
  bool gamma_set = false;
};

struct SweepConfig {
  RunConfig run;
  SweepSpec sweep;
  bool default_values = false;  // grid taken from the axis defaults
};

/// Parses a run configuration; unknown keys and invalid combinations are UsageErrors.
RunConfig parse_run_config(const nlohmann::json& j);
SweepConfig parse_sweep_config(const nlohmann::json& j);

/// Applies a command-line seed override (also the split seed unless the config fixed it).
void apply_seed(RunConfig& config, std::uint64_t seed);

/// Every setting, defaults included.
nlohmann::json resolved(const RunConfig& config);
nlohmann::json resolved(const SweepConfig& config);

nlohmann::json read_json_file(const std::string& path);  // IoError / ParseError

Dataset load_source(const DataSource& source);

}  // namespace oeflow::cli
