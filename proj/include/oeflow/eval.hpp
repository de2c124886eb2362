#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oeflow/flow.hpp"

namespace oeflow {

struct ScoredEntry {
  double score = 0.0;
  bool anomaly = false;
  std::string type;  // anomaly type tag; empty for normals
};

struct ScoredSet {
  std::vector<ScoredEntry> entries;

  std::size_t normal_count() const;
  std::size_t anomaly_count() const;
  /// UsageError unless both classes are present.
  void require_both_classes() const;
};

/// Builds a scored set from parallel scores and labels ("normal" or a type tag).
ScoredSet make_scored_set(const Vector& scores, const std::vector<std::string>& labels);

/// Mann-Whitney AUC: P(score_anomaly > score_normal) + 0.5 P(tie), via
/// mid-ranks in O(n log n).
double auc(const ScoredSet& set);

struct RocPoint {
  double false_positive_rate = 0.0;
  double true_positive_rate = 0.0;
};

/// Starts at (0, 0), adds one point per distinct score (descending
/// thresholds), ends at (1, 1).
std::vector<RocPoint> roc_curve(const ScoredSet& set);
double trapezoid_area(const std::vector<RocPoint>& curve);

/// AUC of all normals against each anomaly type. Types listed in `types`
/// without samples are skipped with a warning on stderr; an empty `types`
/// means every type present.
std::map<std::string, double> per_type_auc(const ScoredSet& set, const std::vector<std::string>& types = {});

/// AUC of all normals against anomalies whose type is (or is not) in `types`;
/// nullopt when that subset has no anomalies.
std::optional<double> auc_restricted(const ScoredSet& set, const std::vector<std::string>& types, bool include);

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

struct SeparationStats {
  BoxStats normal_nll, anomaly_nll;
  BoxStats normal_norm, anomaly_norm;  // |m(x)|
};

SeparationStats separation_stats(const FlowModel& model, const Matrix& normal_test, const Matrix& anomaly_test);

struct MeanCi {
  double mean = 0.0;
  /// 95% Student-t half-width; nullopt for fewer than two values.
  std::optional<double> half_width;
  std::size_t count = 0;
};

MeanCi mean_ci95(const std::vector<double>& values);

/// Half-width for comparing two means: sqrt(h_a^2 + h_b^2), missing widths count as 0.
double pooled_half_width(const MeanCi& a, const MeanCi& b);

}  // namespace oeflow
