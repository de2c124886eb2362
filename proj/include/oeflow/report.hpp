#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oeflow/eval.hpp"
#include "oeflow/sweep.hpp"

namespace oeflow {

// All tables are tab-separated with a header row.

/// id  label  type  score, with label "normal"/"anomaly" and type empty for normals.
void write_score_table(std::ostream& out, const std::vector<std::string>& labels, const Vector& scores);
/// ParseError with the line number on malformed rows.
ScoredSet read_score_table(std::istream& in);

struct EvalReport {
  double auc = 0.0;
  std::size_t normal_count = 0;
  std::size_t anomaly_count = 0;
  std::map<std::string, double> per_type;
  std::vector<RocPoint> roc;
  std::optional<SeparationStats> separation;
};

EvalReport evaluate(const ScoredSet& set);

/// section  key  value  rows for global AUC, counts, per-type AUC and separation quartiles.
void write_eval_report(std::ostream& out, const EvalReport& report);
void write_roc_table(std::ostream& out, const std::vector<RocPoint>& curve);

/// axis  value  detector  runs  failures  mean_auc  ci95  [exposed/unexposed columns]
void write_sweep_table(std::ostream& out, const SweepReport& report);
void write_sweep_runs(std::ostream& out, const SweepReport& report);

/// Mean AUC per grid point with a shaded 95% band, one series per detector
/// (and exposed / unexposed series on the type-count axis).
void write_sweep_svg(std::ostream& out, const SweepReport& report, const std::string& title);
void write_roc_svg(std::ostream& out, const std::vector<RocPoint>& curve, const std::string& title);

}  // namespace oeflow
