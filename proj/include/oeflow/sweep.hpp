#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oeflow/data.hpp"
#include "oeflow/detector.hpp"
#include "oeflow/eval.hpp"

namespace oeflow {

enum class SweepAxis { Lambda, Gamma, ExposedCount, ExposedTypeCount, Detector };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);  // UsageError

struct SweepSpec {
  SweepAxis axis = SweepAxis::Lambda;
  /// Grid values as text: numbers for numeric axes, detector names for the detector axis.
  std::vector<std::string> values;
  /// Detectors evaluated at every grid point (ignored on the detector axis).
  std::vector<DetectorKind> detectors{DetectorKind::RNVP_OE};
  long repetitions = 10;
  std::uint64_t base_seed = 0;
  unsigned workers = 1;
  /// When set, each finished run is stored here and reused on the next call.
  std::optional<std::filesystem::path> run_directory;

  void validate() const;  // UsageError
};

struct SweepRun {
  std::string value;
  DetectorKind detector = DetectorKind::RNVP_OE;
  long repetition = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double auc_all = 0.0;
  std::optional<double> auc_exposed;
  std::optional<double> auc_unexposed;
  std::vector<std::string> exposed_types;
  long exposed_count = 0;
};

struct SweepPoint {
  std::string value;
  DetectorKind detector = DetectorKind::RNVP_OE;
  MeanCi all;
  MeanCi exposed;    // type-count axis only
  MeanCi unexposed;  // type-count axis only
  std::size_t failures = 0;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::Lambda;
  std::vector<SweepPoint> points;  // grid order, then detector order
  std::vector<SweepRun> runs;      // sorted by (grid index, detector, repetition)

  const SweepPoint& point(const std::string& value, DetectorKind detector) const;  // UsageError
};

/// Runs every (grid value, detector, repetition) on features that are already
/// reduced. Repetition r uses seed base_seed + r at every grid point, so runs
/// are paired across the grid. Exposed-count runs subsample the training
/// anomalies; type-count runs pick that many training anomaly types at random
/// and also report AUC on exposed and unexposed test types. A run that
/// diverges is recorded as failed and excluded from the aggregates. BCLASS
/// runs without any exposed anomaly are skipped.
SweepReport run_sweep(const SweepSpec& spec, const DetectorConfig& base, const Splits& data);

/// Runs directly on in-memory splits (the reducer, if any, was applied by the caller).
SweepRun run_single(const SweepSpec& spec, const DetectorConfig& base, const Splits& data, const std::string& value,
                    DetectorKind detector, long repetition);

}  // namespace oeflow
