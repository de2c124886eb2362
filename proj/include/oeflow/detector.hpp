#pragma once

#include <optional>
#include <string>
#include <variant>

#include "oeflow/baseline.hpp"
#include "oeflow/container.hpp"
#include "oeflow/exposure.hpp"
#include "oeflow/flow.hpp"
#include "oeflow/reduce.hpp"

namespace oeflow {

enum class DetectorKind { RNVP, RNVP_OE, BCLASS, AE_MAE, AE_MSE };
enum class ReducerKind { None, Pca, Autoencoder };

std::string to_string(DetectorKind kind);
DetectorKind detector_from_string(const std::string& name);  // UsageError
std::string to_string(ReducerKind kind);
ReducerKind reducer_from_string(const std::string& name);  // UsageError

bool uses_anomalies(DetectorKind kind);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::RNVP_OE;
  TrainConfig train;
  FlowArchitecture flow;          // dimension is taken from the data
  /// Fit the flow's input standardization on the normal training samples.
  bool standardize_flow_input = true;
  AutoencoderConfig autoencoder;  // AE_MAE / AE_MSE
  ClassifierOptions classifier;
};

struct ReducerConfig {
  ReducerKind kind = ReducerKind::None;
  Eigen::Index bottleneck = 128;
  AutoencoderConfig autoencoder;  // bottleneck is overridden by the field above
};

/// An optional reducer followed by one trained detector; score() maps raw
/// feature vectors to anomaly scores (higher = more anomalous).
struct Pipeline {
  std::optional<Reducer> reducer;
  DetectorKind kind = DetectorKind::RNVP;
  std::variant<FlowModel, Classifier, Autoencoder> model;

  Eigen::Index input_dim() const;
  Vector score(const Matrix& raw) const;
  const FlowModel* flow() const { return std::get_if<FlowModel>(&model); }

  ModelContainer to_container() const;
  static Pipeline from_container(const ModelContainer& container);
};

struct ReducerTrainResult {
  Reducer reducer;
  std::optional<TrainHistory> history;
};

/// Fits the configured reducer on normal samples. UsageError for ReducerKind::None.
ReducerTrainResult fit_reducer(const ReducerConfig& config, const Matrix& normal_train, const Matrix& normal_validation);

struct DetectorTrainResult {
  Pipeline pipeline;
  TrainHistory history;
};

/// Trains the configured detector on already-reduced features. RNVP ignores
/// the anomalies; RNVP_OE with no anomalies is plain RNVP; BCLASS requires
/// anomalies. `reducer` is stored in the pipeline unchanged.
DetectorTrainResult train_detector(const DetectorConfig& config, const Matrix& normal_train, const Matrix& anomaly_train,
                                   const Matrix& normal_validation, std::optional<Reducer> reducer = std::nullopt);

}  // namespace oeflow
