#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oeflow/numerics.hpp"

namespace oeflow {

inline const std::string kNormalLabel = "normal";

/// Labeled feature vectors, one sample per column.
struct Dataset {
  Matrix features;                                   // d x n
  std::vector<std::string> labels;                   // "normal" or an anomaly type tag
  std::map<std::string, std::string> type_registry;  // tag -> description

  Eigen::Index dimension() const { return features.rows(); }
  Eigen::Index size() const { return features.cols(); }
  bool is_anomaly(Eigen::Index i) const { return labels[static_cast<std::size_t>(i)] != kNormalLabel; }
  Eigen::Index normal_count() const;
  Eigen::Index anomaly_count() const;

  Matrix normals() const;
  Matrix anomalies() const;
  /// Samples at the given positions, in that order; the registry is kept.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// Registered tags that occur at least once, sorted.
  std::vector<std::string> present_types() const;

  /// Registers any unregistered anomaly tags (empty description), then checks invariants.
  void register_labels();
  /// Throws FormatError when shapes disagree, a label is empty or unregistered,
  /// or a feature is non-finite.
  void validate() const;
};

/// Text table: header "label,f0,f1,...", then one row per sample with the
/// label followed by d decimal values written in shortest round-trip form.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.1;
  double test = 0.3;
  std::uint64_t seed = 0;

  struct Indices {
    std::vector<std::size_t> train, validation, test;
  };
  /// When set, fractions are ignored and these positions are used verbatim.
  std::optional<Indices> explicit_indices;
};

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Stratified by label. Normals are divided by the three fractions; each
/// anomaly type is divided between train and test only, in proportion
/// train : test, out of floor(count * (train + validation + test)) samples.
Splits split(const Dataset& dataset, const SplitSpec& spec);

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Matrix covariance;
};

/// Anomaly of type `tag`: a mixture draw from component c displaced by
/// sigma_c * (shift * v + noise_scale * B^T e), where the rows of B are an
/// orthonormal basis of the family's subspace, v is the normalized sum of those
/// rows, e ~ N(0, I_k) and sigma_c = sqrt(v^T Sigma_c v) is the component's
/// standard deviation along v.
struct AnomalyFamily {
  std::string tag;
  std::string description;
  double shift = 1.0;
  Matrix subspace;  // k x d
  double noise_scale = 0.0;
  long count = 0;
};

struct SyntheticSpec {
  Eigen::Index dimension = 0;
  std::vector<MixtureComponent> components;
  long normal_count = 0;
  std::vector<AnomalyFamily> anomalies;
  std::uint64_t seed = 0;

  void validate() const;  // UsageError
};

/// Corridor-like benchmark: d = 16, three anisotropic Gaussian environments,
/// eight anomaly types with shifts log-spaced from 0.5 to 4, 5000 normals and
/// 100 anomalies per type.
SyntheticSpec default_benchmark_spec(std::uint64_t seed = 7);

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Manifest: JSON rendering of a SyntheticSpec, sufficient to regenerate the dataset.
std::string synthetic_manifest(const SyntheticSpec& spec);
SyntheticSpec parse_synthetic_manifest(const std::string& text);  // ParseError / UsageError

/// n anomalies chosen uniformly without replacement; normals untouched; order preserved.
Dataset subsample_anomalies(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Normals plus anomalies whose tag is in `types`. UsageError on unknown tags.
Dataset select_types(const Dataset& dataset, const std::set<std::string>& types);

}  // namespace oeflow
