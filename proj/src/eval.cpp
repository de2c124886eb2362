#include "oeflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "oeflow/data.hpp"
#include "oeflow/errors.hpp"

namespace oeflow {

std::size_t ScoredSet::anomaly_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.anomaly; }));
}

std::size_t ScoredSet::normal_count() const { return entries.size() - anomaly_count(); }

void ScoredSet::require_both_classes() const {
  if (normal_count() == 0 || anomaly_count() == 0) {
    throw UsageError("AUC needs at least one normal and one anomalous sample (got " + std::to_string(normal_count()) +
                     " normal, " + std::to_string(anomaly_count()) + " anomalous)");
  }
}

ScoredSet make_scored_set(const Vector& scores, const std::vector<std::string>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size()) throw ShapeError("one label per score required");
  ScoredSet set;
  set.entries.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool anomaly = labels[i] != kNormalLabel;
    set.entries.push_back({scores[static_cast<Eigen::Index>(i)], anomaly, anomaly ? labels[i] : std::string()});
  }
  return set;
}

double auc(const ScoredSet& set) {
  set.require_both_classes();
  for (const auto& e : set.entries) {
    if (std::isnan(e.score)) throw NumericError("AUC of NaN scores");
  }
  const std::size_t n = set.entries.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.entries[a].score < set.entries[b].score; });
  // Twice the anomaly rank sum, using twice the mid-rank so everything stays integral.
  std::int64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && set.entries[order[j]].score == set.entries[order[i]].score) ++j;
    const auto twice_mid_rank = static_cast<std::int64_t>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (set.entries[order[k]].anomaly) twice_rank_sum += twice_mid_rank;
    }
    i = j;
  }
  const auto n_a = static_cast<std::int64_t>(set.anomaly_count());
  const auto n_n = static_cast<std::int64_t>(n) - n_a;
  const std::int64_t twice_u = twice_rank_sum - n_a * (n_a + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n_a * n_n);
}

std::vector<RocPoint> roc_curve(const ScoredSet& set) {
  set.require_both_classes();
  std::vector<const ScoredEntry*> sorted;
  for (const auto& e : set.entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->score > b->score; });
  const auto n_a = static_cast<double>(set.anomaly_count());
  const auto n_n = static_cast<double>(set.normal_count());
  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < sorted.size()) {
    const double threshold = sorted[i]->score;
    while (i < sorted.size() && sorted[i]->score == threshold) {
      (sorted[i]->anomaly ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / n_n, static_cast<double>(tp) / n_a});
  }
  return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].false_positive_rate - curve[i - 1].false_positive_rate) *
            (curve[i].true_positive_rate + curve[i - 1].true_positive_rate) * 0.5;
  }
  return area;
}

std::optional<double> auc_restricted(const ScoredSet& set, const std::vector<std::string>& types, bool include) {
  const std::set<std::string> wanted(types.begin(), types.end());
  ScoredSet subset;
  for (const auto& e : set.entries) {
    if (!e.anomaly || (wanted.count(e.type) > 0) == include) subset.entries.push_back(e);
  }
  if (subset.anomaly_count() == 0) return std::nullopt;
  return auc(subset);
}

std::map<std::string, double> per_type_auc(const ScoredSet& set, const std::vector<std::string>& types) {
  std::vector<std::string> wanted = types;
  if (wanted.empty()) {
    std::set<std::string> present;
    for (const auto& e : set.entries) {
      if (e.anomaly) present.insert(e.type);
    }
    wanted.assign(present.begin(), present.end());
  }
  std::map<std::string, double> result;
  for (const auto& type : wanted) {
    if (const auto value = auc_restricted(set, {type}, true)) {
      result[type] = *value;
    } else {
      std::cerr << "warning: anomaly type '" << type << "' has no samples; omitted from per-type AUC\n";
    }
  }
  return result;
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw UsageError("box statistics of an empty set");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

SeparationStats separation_stats(const FlowModel& model, const Matrix& normal_test, const Matrix& anomaly_test) {
  auto summarize = [&](const Matrix& x, BoxStats& nll_stats, BoxStats& norm_stats) {
    const auto out = flow_forward(model, x);
    const Vector values = nll(model, x);
    const Vector norms = out.z.colwise().norm().transpose();
    nll_stats = box_stats({values.data(), values.data() + values.size()});
    norm_stats = box_stats({norms.data(), norms.data() + norms.size()});
  };
  SeparationStats stats;
  summarize(normal_test, stats.normal_nll, stats.normal_norm);
  summarize(anomaly_test, stats.anomaly_nll, stats.anomaly_norm);
  return stats;
}

MeanCi mean_ci95(const std::vector<double>& values) {
  MeanCi out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double dof = static_cast<double>(values.size() - 1);
    const double sd = std::sqrt(ss / dof);
    const boost::math::students_t dist(dof);
    const double t = boost::math::quantile(dist, 0.975);
    out.half_width = t * sd / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

double pooled_half_width(const MeanCi& a, const MeanCi& b) {
  const double ha = a.half_width.value_or(0.0);
  const double hb = b.half_width.value_or(0.0);
  return std::sqrt(ha * ha + hb * hb);
}

}  // namespace oeflow
