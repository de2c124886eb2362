#pragma once

#include "oeflow/exposure.hpp"
#include "oeflow/numerics.hpp"

namespace oeflow {

/// Binary classifier d -> 256 -> 64 -> 1 (ReLU hidden, Sigmoid output);
/// its output probability is the anomaly score.
struct Classifier {
  Mlp net;

  static Classifier make(Eigen::Index dimension, Rng& rng);
};

inline constexpr double kBceClamp = 1e-12;

/// -[y log p + (1 - y) log(1 - p)] with p clamped to [1e-12, 1 - 1e-12].
double bce_loss(double prediction, int label);

struct ClassifierOptions {
  /// false: checkpoint on BCE over normal validation samples (all labeled 0).
  /// true: validation also includes the anomalies passed to train_classifier
  /// as anomaly_validation, labeled 1.
  bool mixed_validation = false;
};

struct ClassifierTrainResult {
  Classifier model;
  TrainHistory history;  // validation_nll holds validation BCE
};

/// Mini-batch Adam on BCE (normal = 0, anomaly = 1). Each step pairs a normal
/// mini-batch with an equally sized anomaly batch drawn with replacement, so
/// batches are balanced. Uses learning_rate, max_epochs, batch_size, seed,
/// patience and lr_factor from config; lambda and gamma are ignored.
ClassifierTrainResult train_classifier(const Matrix& normal_train, const Matrix& anomaly_train,
                                       const Matrix& normal_validation, const TrainConfig& config,
                                       const ClassifierOptions& options = {},
                                       const Matrix& anomaly_validation = Matrix());

double classifier_score(const Classifier& model, const Vector& x);
Vector classifier_score(const Classifier& model, const Matrix& x);

/// Mean BCE over a labeled batch, and (optionally) its parameter gradient.
double mean_bce(const Classifier& model, const Matrix& x, const Vector& labels, Vector* param_grad = nullptr);

ModelSection to_section(const Classifier& model, const std::string& kind = "classifier");
Classifier classifier_from_section(const ModelSection& section);

}  // namespace oeflow
