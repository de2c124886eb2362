#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "oeflow/container.hpp"
#include "oeflow/errors.hpp"

namespace oeflow::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw UsageError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw UsageError("unknown key '" + key + "' in config section '" + section + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& target, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + section + "." + key + "' has the wrong type");
  }
}

void read_autoencoder(const json& j, AutoencoderConfig& ae, const std::string& section) {
  check_keys(j, {"hidden", "bottleneck", "linear", "learning_rate", "max_epochs", "batch_size", "patience", "lr_factor"},
             section);
  std::vector<long> hidden(ae.hidden.begin(), ae.hidden.end());
  read(j, "hidden", hidden, section);
  ae.hidden.assign(hidden.begin(), hidden.end());
  long bottleneck = ae.bottleneck;
  read(j, "bottleneck", bottleneck, section);
  ae.bottleneck = bottleneck;
  read(j, "linear", ae.linear, section);
  read(j, "learning_rate", ae.learning_rate, section);
  read(j, "max_epochs", ae.max_epochs, section);
  read(j, "batch_size", ae.batch_size, section);
  read(j, "patience", ae.patience, section);
  read(j, "lr_factor", ae.lr_factor, section);
}

json autoencoder_json(const AutoencoderConfig& ae) {
  return {{"hidden", std::vector<long>(ae.hidden.begin(), ae.hidden.end())},
          {"bottleneck", ae.bottleneck},
          {"linear", ae.linear},
          {"learning_rate", ae.learning_rate},
          {"max_epochs", ae.max_epochs},
          {"batch_size", ae.batch_size},
          {"patience", ae.patience},
          {"lr_factor", ae.lr_factor}};
}

std::string value_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_double(v.get<double>());
  throw UsageError("sweep values must be numbers or strings");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  check_keys(j, {"seed", "data", "reducer", "detector", "sweep"}, "top level");
  RunConfig config;
  read(j, "seed", config.seed, "top level");

  if (!j.contains("data")) throw UsageError("config needs a 'data' section");
  const json& data = j.at("data");
  check_keys(data, {"path", "synthetic", "synthetic_seed", "split"}, "data");
  read(data, "path", config.data.path, "data");
  read(data, "synthetic", config.data.synthetic, "data");
  read(data, "synthetic_seed", config.data.synthetic_seed, "data");
  if (config.data.path.empty() == config.data.synthetic.empty()) {
    throw UsageError("data section needs exactly one of 'path' or 'synthetic'");
  }
  config.data.split.seed = config.seed;
  if (data.contains("split")) {
    const json& s = data.at("split");
    check_keys(s, {"train", "validation", "test", "seed"}, "data.split");
    read(s, "train", config.data.split.train, "data.split");
    read(s, "validation", config.data.split.validation, "data.split");
    read(s, "test", config.data.split.test, "data.split");
    if (s.contains("seed")) {
      read(s, "seed", config.data.split.seed, "data.split");
      config.data.split_seed_set = true;
    }
  }

  if (j.contains("reducer")) {
    const json& r = j.at("reducer");
    check_keys(r, {"kind", "bottleneck", "autoencoder"}, "reducer");
    std::string kind = "none";
    read(r, "kind", kind, "reducer");
    config.reducer.kind = reducer_from_string(kind);
    long bottleneck = config.reducer.bottleneck;
    read(r, "bottleneck", bottleneck, "reducer");
    config.reducer.bottleneck = bottleneck;
    if (r.contains("autoencoder")) read_autoencoder(r.at("autoencoder"), config.reducer.autoencoder, "reducer.autoencoder");
  }

  DetectorConfig& d = config.detector;
  bool anomaly_batch_set = false;
  if (j.contains("detector")) {
    const json& dj = j.at("detector");
    check_keys(dj, {"kind", "lambda", "gamma", "learning_rate", "max_epochs", "batch_size", "anomaly_batch_size",
                    "patience", "lr_factor", "coupling_layers", "hidden", "clamp", "alternate_masks",
                    "standardize_input", "autoencoder", "mixed_validation"},
               "detector");
    std::string kind = to_string(d.kind);
    read(dj, "kind", kind, "detector");
    d.kind = detector_from_string(kind);
    config.lambda_set = dj.contains("lambda");
    config.gamma_set = dj.contains("gamma");
    read(dj, "lambda", d.train.lambda, "detector");
    read(dj, "gamma", d.train.gamma, "detector");
    read(dj, "learning_rate", d.train.learning_rate, "detector");
    read(dj, "max_epochs", d.train.max_epochs, "detector");
    read(dj, "batch_size", d.train.batch_size, "detector");
    anomaly_batch_set = dj.contains("anomaly_batch_size");
    read(dj, "anomaly_batch_size", d.train.anomaly_batch_size, "detector");
    read(dj, "patience", d.train.patience, "detector");
    read(dj, "lr_factor", d.train.lr_factor, "detector");
    read(dj, "coupling_layers", d.flow.coupling_layers, "detector");
    long hidden = d.flow.hidden;
    read(dj, "hidden", hidden, "detector");
    d.flow.hidden = hidden;
    read(dj, "clamp", d.flow.clamp, "detector");
    read(dj, "alternate_masks", d.flow.alternate_masks, "detector");
    read(dj, "standardize_input", d.standardize_flow_input, "detector");
    read(dj, "mixed_validation", d.classifier.mixed_validation, "detector");
    if (dj.contains("autoencoder")) read_autoencoder(dj.at("autoencoder"), d.autoencoder, "detector.autoencoder");
  }
  if (!anomaly_batch_set) d.train.anomaly_batch_size = d.train.batch_size;
  d.train.seed = config.seed;
  d.train.validate();

  const bool uses_margin = d.kind == DetectorKind::RNVP_OE || d.kind == DetectorKind::BCLASS;
  if (!uses_margin && (config.lambda_set || config.gamma_set)) {
    throw UsageError("detector " + to_string(d.kind) +
                     " does not use lambda or gamma; remove them from the detector section or use RNVP_OE");
  }
  return config;
}

SweepConfig parse_sweep_config(const json& j) {
  SweepConfig config;
  config.run = parse_run_config(j);
  if (!j.contains("sweep")) throw UsageError("sweep config needs a 'sweep' section");
  const json& s = j.at("sweep");
  check_keys(s, {"axis", "values", "detectors", "repetitions", "workers"}, "sweep");
  std::string axis;
  read(s, "axis", axis, "sweep");
  if (axis.empty()) throw UsageError("sweep section needs an 'axis'");
  config.sweep.axis = sweep_axis_from_string(axis);
  if (s.contains("values")) {
    if (!s.at("values").is_array()) throw UsageError("sweep values must be an array");
    for (const auto& v : s.at("values")) config.sweep.values.push_back(value_text(v));
  } else {
    config.default_values = true;
    switch (config.sweep.axis) {
      case SweepAxis::Lambda: config.sweep.values = {"0", "0.1", "1", "10"}; break;
      case SweepAxis::Gamma: config.sweep.values = {"0", "10", "100", "1000"}; break;
      case SweepAxis::ExposedCount:
        for (long n = 2; n <= 1024; n *= 2) config.sweep.values.push_back(std::to_string(n));
        break;
      case SweepAxis::Detector: config.sweep.values = {"RNVP", "RNVP_OE", "BCLASS", "AE_MAE", "AE_MSE"}; break;
      case SweepAxis::ExposedTypeCount: throw UsageError("an exposed_type_count sweep needs explicit 'values'");
    }
  }
  if (s.contains("detectors")) {
    config.sweep.detectors.clear();
    std::vector<std::string> names;
    read(s, "detectors", names, "sweep");
    for (const auto& n : names) config.sweep.detectors.push_back(detector_from_string(n));
  } else {
    config.sweep.detectors = {config.run.detector.kind};
  }
  read(s, "repetitions", config.sweep.repetitions, "sweep");
  read(s, "workers", config.sweep.workers, "sweep");
  config.sweep.base_seed = config.run.seed;
  if (config.sweep.axis == SweepAxis::Lambda || config.sweep.axis == SweepAxis::Gamma) {
    for (auto k : config.sweep.detectors) {
      if (k != DetectorKind::RNVP_OE) {
        throw UsageError("a " + axis + " sweep only applies to RNVP_OE, not " + to_string(k));
      }
    }
  }
  config.sweep.validate();
  return config;
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.detector.train.seed = seed;
  if (!config.data.split_seed_set) config.data.split.seed = seed;
}

nlohmann::json resolved(const RunConfig& c) {
  json data{{"split", {{"train", c.data.split.train},
                       {"validation", c.data.split.validation},
                       {"test", c.data.split.test},
                       {"seed", c.data.split.seed}}}};
  if (!c.data.path.empty()) data["path"] = c.data.path;
  if (!c.data.synthetic.empty()) {
    data["synthetic"] = c.data.synthetic;
    data["synthetic_seed"] = c.data.synthetic_seed;
  }
  const auto& t = c.detector.train;
  json detector{{"kind", to_string(c.detector.kind)},
                {"learning_rate", t.learning_rate},
                {"max_epochs", t.max_epochs},
                {"batch_size", t.batch_size},
                {"anomaly_batch_size", t.anomaly_batch_size},
                {"patience", t.patience},
                {"lr_factor", t.lr_factor},
                {"coupling_layers", c.detector.flow.coupling_layers},
                {"hidden", c.detector.flow.hidden},
                {"clamp", c.detector.flow.clamp},
                {"alternate_masks", c.detector.flow.alternate_masks},
                {"standardize_input", c.detector.standardize_flow_input},
                {"mixed_validation", c.detector.classifier.mixed_validation},
                {"autoencoder", autoencoder_json(c.detector.autoencoder)}};
  if (c.detector.kind == DetectorKind::RNVP_OE || c.detector.kind == DetectorKind::BCLASS) {
    detector["lambda"] = t.lambda;
    detector["gamma"] = t.gamma;
  }
  return {{"seed", c.seed},
          {"data", data},
          {"reducer", {{"kind", to_string(c.reducer.kind)},
                       {"bottleneck", c.reducer.bottleneck},
                       {"autoencoder", autoencoder_json(c.reducer.autoencoder)}}},
          {"detector", detector}};
}

nlohmann::json resolved(const SweepConfig& c) {
  json j = resolved(c.run);
  std::vector<std::string> detectors;
  for (auto k : c.sweep.detectors) detectors.push_back(to_string(k));
  j["sweep"] = {{"axis", to_string(c.sweep.axis)},
                {"values", c.sweep.values},
                {"detectors", detectors},
                {"repetitions", c.sweep.repetitions}};
  return j;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path + " is not valid JSON: " + e.what(), 0);
  }
}

Dataset load_source(const DataSource& source) {
  if (!source.path.empty()) return load_dataset(source.path);
  if (source.synthetic == "default") return generate_synthetic(default_benchmark_spec(source.synthetic_seed));
  std::ifstream in(source.synthetic);
  if (!in) throw IoError("cannot open " + source.synthetic);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return generate_synthetic(parse_synthetic_manifest(buffer.str()));
}

}  // namespace oeflow::cli
