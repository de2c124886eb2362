#include "oeflow/detector.hpp"

#include "oeflow/errors.hpp"

namespace oeflow {

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::RNVP: return "RNVP";
    case DetectorKind::RNVP_OE: return "RNVP_OE";
    case DetectorKind::BCLASS: return "BCLASS";
    case DetectorKind::AE_MAE: return "AE_MAE";
    case DetectorKind::AE_MSE: return "AE_MSE";
  }
  return "RNVP";
}

DetectorKind detector_from_string(const std::string& name) {
  for (auto kind : {DetectorKind::RNVP, DetectorKind::RNVP_OE, DetectorKind::BCLASS, DetectorKind::AE_MAE, DetectorKind::AE_MSE}) {
    if (to_string(kind) == name) return kind;
  }
  throw UsageError("unknown detector '" + name + "' (expected RNVP, RNVP_OE, BCLASS, AE_MAE or AE_MSE)");
}

std::string to_string(ReducerKind kind) {
  switch (kind) {
    case ReducerKind::None: return "none";
    case ReducerKind::Pca: return "pca";
    case ReducerKind::Autoencoder: return "autoencoder";
  }
  return "none";
}

ReducerKind reducer_from_string(const std::string& name) {
  for (auto kind : {ReducerKind::None, ReducerKind::Pca, ReducerKind::Autoencoder}) {
    if (to_string(kind) == name) return kind;
  }
  throw UsageError("unknown reducer '" + name + "' (expected none, pca or autoencoder)");
}

bool uses_anomalies(DetectorKind kind) { return kind == DetectorKind::RNVP_OE || kind == DetectorKind::BCLASS; }

Eigen::Index Pipeline::input_dim() const {
  if (reducer) return reducer_input_dim(*reducer);
  if (const auto* f = std::get_if<FlowModel>(&model)) return f->dimension();
  if (const auto* c = std::get_if<Classifier>(&model)) return c->net.in_size();
  return std::get<Autoencoder>(model).input_dim();
}

Vector Pipeline::score(const Matrix& raw) const {
  if (raw.rows() != input_dim()) {
    throw ShapeError("dataset dimension " + std::to_string(raw.rows()) + " does not match model input dimension " +
                     std::to_string(input_dim()));
  }
  const Matrix features = reducer ? encode(*reducer, raw) : raw;
  switch (kind) {
    case DetectorKind::RNVP:
    case DetectorKind::RNVP_OE: return anomaly_score(std::get<FlowModel>(model), features);
    case DetectorKind::BCLASS: return classifier_score(std::get<Classifier>(model), features);
    case DetectorKind::AE_MAE: return reconstruction_score(std::get<Autoencoder>(model), features, ReconstructionKind::MAE);
    case DetectorKind::AE_MSE: return reconstruction_score(std::get<Autoencoder>(model), features, ReconstructionKind::MSE);
  }
  return {};
}

ModelContainer Pipeline::to_container() const {
  ModelContainer container;
  ModelSection header;
  header.kind = "pipeline";
  header.set("detector", to_string(kind));
  header.set("reducer", !reducer ? "none" : std::holds_alternative<PcaReducer>(*reducer) ? "pca" : "autoencoder");
  container.sections.push_back(std::move(header));
  if (reducer) {
    container.sections.push_back(std::visit([](const auto& r) { return to_section(r, "reducer"); }, *reducer));
  }
  container.sections.push_back(std::visit([](const auto& m) { return to_section(m, "detector"); }, model));
  return container;
}

Pipeline Pipeline::from_container(const ModelContainer& container) {
  const auto& header = container.section("pipeline");
  Pipeline pipeline;
  pipeline.kind = detector_from_string(header.get("detector"));
  const auto reducer_kind = reducer_from_string(header.get("reducer"));
  if (reducer_kind == ReducerKind::Pca) pipeline.reducer = pca_from_section(container.section("reducer"));
  if (reducer_kind == ReducerKind::Autoencoder) pipeline.reducer = autoencoder_from_section(container.section("reducer"));
  const auto& detector = container.section("detector");
  switch (pipeline.kind) {
    case DetectorKind::RNVP:
    case DetectorKind::RNVP_OE: pipeline.model = flow_from_section(detector); break;
    case DetectorKind::BCLASS: pipeline.model = classifier_from_section(detector); break;
    case DetectorKind::AE_MAE:
    case DetectorKind::AE_MSE: pipeline.model = autoencoder_from_section(detector); break;
  }
  if (pipeline.reducer) {
    const Eigen::Index out = reducer_output_dim(*pipeline.reducer);
    const Eigen::Index in = std::visit(
        [](const auto& m) -> Eigen::Index {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, FlowModel>) return m.dimension();
          else if constexpr (std::is_same_v<T, Classifier>) return m.net.in_size();
          else return m.input_dim();
        },
        pipeline.model);
    if (in != out) throw FormatError("reducer output dimension differs from detector input dimension");
  }
  return pipeline;
}

ReducerTrainResult fit_reducer(const ReducerConfig& config, const Matrix& normal_train, const Matrix& normal_validation) {
  switch (config.kind) {
    case ReducerKind::None: throw UsageError("fit_reducer called without a reducer");
    case ReducerKind::Pca: return {pca_fit(normal_train, config.bottleneck), std::nullopt};
    case ReducerKind::Autoencoder: {
      AutoencoderConfig ae = config.autoencoder;
      ae.bottleneck = config.bottleneck;
      auto trained = train_autoencoder(normal_train, normal_validation, ae);
      return {std::move(trained.model), std::move(trained.history)};
    }
  }
  throw UsageError("unknown reducer");
}

DetectorTrainResult train_detector(const DetectorConfig& config, const Matrix& normal_train, const Matrix& anomaly_train,
                                   const Matrix& normal_validation, std::optional<Reducer> reducer) {
  if (reducer && reducer_output_dim(*reducer) != normal_train.rows()) {
    throw ShapeError("encoder output dimension " + std::to_string(reducer_output_dim(*reducer)) +
                     " differs from detector input dimension " + std::to_string(normal_train.rows()));
  }
  DetectorTrainResult result;
  result.pipeline.reducer = std::move(reducer);
  result.pipeline.kind = config.kind;
  switch (config.kind) {
    case DetectorKind::RNVP:
    case DetectorKind::RNVP_OE: {
      FlowArchitecture arch = config.flow;
      arch.dimension = normal_train.rows();
      Rng init_rng(Rng::derive(config.train.seed, 3));
      FlowModel initial = FlowModel::make(arch, init_rng);
      if (config.standardize_flow_input) initial.fit_standardization(normal_train);
      const Matrix none(normal_train.rows(), 0);
      const Matrix& exposed = config.kind == DetectorKind::RNVP ? none : anomaly_train;
      auto trained = train_flow(std::move(initial), normal_train, exposed, normal_validation, config.train);
      result.pipeline.model = std::move(trained.model);
      result.history = std::move(trained.history);
      break;
    }
    case DetectorKind::BCLASS: {
      auto trained = train_classifier(normal_train, anomaly_train, normal_validation, config.train, config.classifier);
      result.pipeline.model = std::move(trained.model);
      result.history = std::move(trained.history);
      break;
    }
    case DetectorKind::AE_MAE:
    case DetectorKind::AE_MSE: {
      AutoencoderConfig ae = config.autoencoder;
      ae.seed = config.train.seed;
      auto trained = train_autoencoder(normal_train, normal_validation, ae);
      result.pipeline.model = std::move(trained.model);
      result.history = std::move(trained.history);
      break;
    }
  }
  return result;
}

}  // namespace oeflow
