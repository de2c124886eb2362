#include "oeflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "oeflow/errors.hpp"

namespace oeflow {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  for (auto& f : fields) {
    const auto begin = f.find_first_not_of(" \t");
    const auto end = f.find_last_not_of(" \t");
    f = begin == std::string::npos ? std::string() : f.substr(begin, end - begin + 1);
  }
  return fields;
}

Eigen::Index floor_count(double fraction, Eigen::Index n) {
  return static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

Eigen::Index Dataset::normal_count() const {
  return static_cast<Eigen::Index>(std::count(labels.begin(), labels.end(), kNormalLabel));
}

Eigen::Index Dataset::anomaly_count() const { return size() - normal_count(); }

Matrix Dataset::normals() const {
  Matrix out(dimension(), normal_count());
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!is_anomaly(i)) out.col(c++) = features.col(i);
  }
  return out;
}

Matrix Dataset::anomalies() const {
  Matrix out(dimension(), anomaly_count());
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (is_anomaly(i)) out.col(c++) = features.col(i);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.type_registry = type_registry;
  out.features.resize(dimension(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= static_cast<std::size_t>(size())) throw UsageError("dataset index out of range");
    out.features.col(static_cast<Eigen::Index>(k)) = features.col(static_cast<Eigen::Index>(indices[k]));
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

std::vector<std::string> Dataset::present_types() const {
  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (label != kNormalLabel) seen.insert(label);
  }
  return {seen.begin(), seen.end()};
}

void Dataset::register_labels() {
  for (const auto& label : labels) {
    if (label != kNormalLabel && !type_registry.count(label)) type_registry[label] = "";
  }
  validate();
}

void Dataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != features.cols()) {
    throw FormatError("dataset has " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(features.cols()) + " samples");
  }
  if (features.rows() < 1) throw FormatError("dataset dimension must be at least 1");
  for (const auto& label : labels) {
    if (label.empty()) throw FormatError("empty sample label");
    if (label != kNormalLabel && !type_registry.count(label)) {
      throw FormatError("label '" + label + "' is not a registered anomaly type");
    }
  }
  if (!features.allFinite()) throw FormatError("dataset contains non-finite features");
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  dataset.validate();
  out << "label";
  for (Eigen::Index j = 0; j < dataset.dimension(); ++j) out << ",f" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset.labels[static_cast<std::size_t>(i)];
    if (label.find_first_of(",\n") != std::string::npos) throw UsageError("labels may not contain ',' or newlines");
    out << label;
    for (Eigen::Index j = 0; j < dataset.dimension(); ++j) out << ',' << format_double(dataset.features(j, i));
    out << '\n';
  }
  if (!out) throw IoError("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_fields(line).size() < 2 || split_fields(line).front() != "label") {
    throw FormatError("dataset must start with a header 'label,f0,...' and at least one feature column");
  }
  const std::size_t columns = split_fields(line).size();
  const auto d = static_cast<Eigen::Index>(columns - 1);
  std::vector<double> values;
  std::vector<std::string> labels;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw ParseError("row has " + std::to_string(fields.size()) + " columns, header has " + std::to_string(columns),
                       line_number);
    }
    if (fields[0].empty()) throw ParseError("empty label", line_number);
    labels.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      try {
        values.push_back(parse_double(fields[j]));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), line_number);
      }
    }
  }
  Dataset dataset;
  dataset.labels = std::move(labels);
  dataset.features = Eigen::Map<const Matrix>(values.data(), d, static_cast<Eigen::Index>(dataset.labels.size()));
  dataset.register_labels();
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

Splits split(const Dataset& dataset, const SplitSpec& spec) {
  dataset.validate();
  if (spec.explicit_indices) {
    const auto& idx = *spec.explicit_indices;
    std::vector<bool> used(static_cast<std::size_t>(dataset.size()), false);
    for (const auto* list : {&idx.train, &idx.validation, &idx.test}) {
      for (std::size_t i : *list) {
        if (i >= used.size()) throw UsageError("split index " + std::to_string(i) + " out of range");
        if (used[i]) throw UsageError("split index " + std::to_string(i) + " appears twice");
        used[i] = true;
      }
    }
    for (std::size_t i : idx.validation) {
      if (dataset.is_anomaly(static_cast<Eigen::Index>(i))) throw UsageError("validation split must contain normals only");
    }
    return {dataset.subset(idx.train), dataset.subset(idx.validation), dataset.subset(idx.test)};
  }

  const double sum = spec.train + spec.validation + spec.test;
  for (double f : {spec.train, spec.validation, spec.test}) {
    if (!(f > 0 && f < 1)) throw UsageError("split fractions must lie in (0, 1)");
  }
  if (sum > 1.0 + 1e-12) throw UsageError("split fractions sum to more than 1");

  Rng rng(spec.seed);
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    by_label[dataset.labels[static_cast<std::size_t>(i)]].push_back(static_cast<std::size_t>(i));
  }
  SplitSpec::Indices out;
  for (auto& [label, members] : by_label) {
    rng.shuffle(members);
    const auto n = static_cast<Eigen::Index>(members.size());
    Eigen::Index n_train, n_val, n_test;
    if (label == kNormalLabel) {
      n_train = floor_count(spec.train, n);
      n_val = floor_count(spec.validation, n);
      n_test = floor_count(spec.test, n);
      if (n_train < 1 || n_val < 1 || n_test < 1) {
        throw UsageError("too few normal samples (" + std::to_string(n) + ") for the requested split fractions");
      }
    } else {
      const Eigen::Index selected = floor_count(sum, n);
      n_train = floor_count(spec.train / (spec.train + spec.test), selected);
      n_val = 0;
      n_test = selected - n_train;
    }
    auto cursor = members.begin();
    out.train.insert(out.train.end(), cursor, cursor + n_train);
    cursor += n_train;
    out.validation.insert(out.validation.end(), cursor, cursor + n_val);
    cursor += n_val;
    out.test.insert(out.test.end(), cursor, cursor + n_test);
  }
  for (auto* list : {&out.train, &out.validation, &out.test}) std::sort(list->begin(), list->end());
  return {dataset.subset(out.train), dataset.subset(out.validation), dataset.subset(out.test)};
}

void SyntheticSpec::validate() const {
  if (dimension < 1) throw UsageError("synthetic dimension must be >= 1");
  if (components.empty()) throw UsageError("synthetic spec needs at least one normal component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0)) throw UsageError("mixture weights must be >= 0");
    if (c.mean.size() != dimension || c.covariance.rows() != dimension || c.covariance.cols() != dimension) {
      throw UsageError("mixture component shape differs from dimension");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("mixture weights must sum to 1");
  if (normal_count < 0) throw UsageError("normal count must be >= 0");
  std::set<std::string> tags;
  for (const auto& a : anomalies) {
    if (a.count < 0) throw UsageError("anomaly counts must be >= 0");
    if (a.tag.empty() || a.tag == kNormalLabel || a.tag.find_first_of(",\n") != std::string::npos) {
      throw UsageError("invalid anomaly tag '" + a.tag + "'");
    }
    if (!tags.insert(a.tag).second) throw UsageError("duplicate anomaly tag '" + a.tag + "'");
    if (a.subspace.cols() != dimension || a.subspace.rows() < 1) throw UsageError("anomaly subspace shape differs from dimension");
  }
}

namespace {

Matrix random_orthonormal_rows(Eigen::Index rows, Eigen::Index dimension, Rng& rng) {
  Matrix gaussian(dimension, dimension);
  for (Eigen::Index c = 0; c < dimension; ++c) {
    for (Eigen::Index r = 0; r < dimension; ++r) gaussian(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  const Matrix q = qr.householderQ() * Matrix::Identity(dimension, dimension);
  return q.leftCols(rows).transpose();
}

}  // namespace

SyntheticSpec default_benchmark_spec(std::uint64_t seed) {
  constexpr Eigen::Index kDimension = 16;
  constexpr int kEnvironments = 3;
  constexpr int kTypes = 8;
  Rng rng(Rng::derive(seed, 100));
  SyntheticSpec spec;
  spec.dimension = kDimension;
  spec.seed = seed;
  spec.normal_count = 5000;
  for (int e = 0; e < kEnvironments; ++e) {
    MixtureComponent c;
    c.weight = 1.0 / kEnvironments;
    c.mean.resize(kDimension);
    for (Eigen::Index j = 0; j < kDimension; ++j) c.mean[j] = 3.0 * rng.normal();
    const Matrix rotation = random_orthonormal_rows(kDimension, kDimension, rng);
    Vector variances(kDimension);
    for (Eigen::Index j = 0; j < kDimension; ++j) variances[j] = std::exp(rng.uniform(std::log(0.1), std::log(2.0)));
    c.covariance = rotation.transpose() * variances.asDiagonal() * rotation;
    c.covariance = 0.5 * (c.covariance + c.covariance.transpose()).eval();
    spec.components.push_back(std::move(c));
  }
  for (int t = 0; t < kTypes; ++t) {
    AnomalyFamily family;
    family.tag = "type" + std::to_string(t);
    family.shift = 0.5 * std::pow(8.0, static_cast<double>(t) / (kTypes - 1));
    family.subspace = random_orthonormal_rows(2, kDimension, rng);
    family.noise_scale = 0.1;
    family.count = 100;
    family.description = "mean shift of " + format_double(family.shift) + " sigma inside a random 2-d subspace";
    spec.anomalies.push_back(std::move(family));
  }
  return spec;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.dimension;
  std::vector<Matrix> factors;
  for (const auto& c : spec.components) {
    Eigen::LLT<Matrix> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw UsageError("mixture covariance is not positive definite");
    factors.push_back(llt.matrixL());
  }
  Rng rng(spec.seed);
  auto mixture_draw = [&](std::size_t& k) {
    const double u = rng.uniform();
    k = 0;
    double cumulative = spec.components[0].weight;
    while (k + 1 < spec.components.size() && u >= cumulative) cumulative += spec.components[++k].weight;
    Vector eps(d);
    for (Eigen::Index j = 0; j < d; ++j) eps[j] = rng.normal();
    return Vector(spec.components[k].mean + factors[k] * eps);
  };

  long total = spec.normal_count;
  for (const auto& a : spec.anomalies) total += a.count;
  Dataset dataset;
  dataset.features.resize(d, total);
  dataset.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index column = 0;
  std::size_t component = 0;
  for (long i = 0; i < spec.normal_count; ++i) {
    dataset.features.col(column++) = mixture_draw(component);
    dataset.labels.push_back(kNormalLabel);
  }
  for (const auto& family : spec.anomalies) {
    dataset.type_registry[family.tag] = family.description;
    const Eigen::Index k = family.subspace.rows();
    const Vector direction = family.subspace.colwise().sum().transpose().normalized();
    for (long i = 0; i < family.count; ++i) {
      Vector x = mixture_draw(component);
      const double sigma = std::sqrt(direction.dot(spec.components[component].covariance * direction));
      Vector jitter(k);
      for (Eigen::Index j = 0; j < k; ++j) jitter[j] = rng.normal();
      x += sigma * (family.shift * direction + family.noise_scale * (family.subspace.transpose() * jitter));
      dataset.features.col(column++) = x;
      dataset.labels.push_back(family.tag);
    }
  }
  dataset.validate();
  return dataset;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw UsageError("ragged matrix in manifest");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

}  // namespace

std::string synthetic_manifest(const SyntheticSpec& spec) {
  nlohmann::json j;
  j["generator"] = "oeflow-synthetic";
  j["rng"] = "mt19937_64 / box-muller";
  j["dimension"] = spec.dimension;
  j["seed"] = spec.seed;
  j["normal_count"] = spec.normal_count;
  for (const auto& c : spec.components) {
    Matrix mean = c.mean.transpose();
    j["components"].push_back({{"weight", c.weight}, {"mean", matrix_json(mean)[0]}, {"covariance", matrix_json(c.covariance)}});
  }
  j["anomalies"] = nlohmann::json::array();
  for (const auto& a : spec.anomalies) {
    j["anomalies"].push_back({{"tag", a.tag},
                              {"description", a.description},
                              {"shift", a.shift},
                              {"subspace", matrix_json(a.subspace)},
                              {"noise_scale", a.noise_scale},
                              {"count", a.count}});
  }
  return j.dump(2) + "\n";
}

SyntheticSpec parse_synthetic_manifest(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 0);
  }
  SyntheticSpec spec;
  try {
    spec.dimension = j.at("dimension").get<Eigen::Index>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.normal_count = j.at("normal_count").get<long>();
    for (const auto& c : j.at("components")) {
      MixtureComponent component;
      component.weight = c.at("weight").get<double>();
      const auto& mean = c.at("mean");
      component.mean.resize(static_cast<Eigen::Index>(mean.size()));
      for (std::size_t i = 0; i < mean.size(); ++i) component.mean[static_cast<Eigen::Index>(i)] = mean[i].get<double>();
      component.covariance = json_matrix(c.at("covariance"));
      spec.components.push_back(std::move(component));
    }
    if (j.contains("anomalies")) {
      for (const auto& a : j.at("anomalies")) {
        AnomalyFamily family;
        family.tag = a.at("tag").get<std::string>();
        family.description = a.value("description", "");
        family.shift = a.at("shift").get<double>();
        family.subspace = json_matrix(a.at("subspace"));
        family.noise_scale = a.value("noise_scale", 0.0);
        family.count = a.at("count").get<long>();
        spec.anomalies.push_back(std::move(family));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed synthetic manifest: ") + e.what(), 0);
  }
  spec.validate();
  return spec;
}

Dataset subsample_anomalies(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> anomaly_positions;
  std::vector<std::size_t> keep;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    (dataset.is_anomaly(i) ? anomaly_positions : keep).push_back(static_cast<std::size_t>(i));
  }
  if (n > anomaly_positions.size()) {
    throw UsageError("cannot subsample " + std::to_string(n) + " anomalies from " +
                     std::to_string(anomaly_positions.size()));
  }
  Rng rng(seed);
  rng.shuffle(anomaly_positions);
  keep.insert(keep.end(), anomaly_positions.begin(), anomaly_positions.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(keep.begin(), keep.end());
  return dataset.subset(keep);
}

Dataset select_types(const Dataset& dataset, const std::set<std::string>& types) {
  for (const auto& t : types) {
    if (!dataset.type_registry.count(t)) throw UsageError("unknown anomaly type '" + t + "'");
  }
  std::vector<std::size_t> keep;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset.labels[static_cast<std::size_t>(i)];
    if (label == kNormalLabel || types.count(label)) keep.push_back(static_cast<std::size_t>(i));
  }
  return dataset.subset(keep);
}

}  // namespace oeflow
