#include "oeflow/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oeflow/errors.hpp"

namespace oeflow {

Classifier Classifier::make(Eigen::Index dimension, Rng& rng) {
  Classifier c;
  c.net = Mlp::make({dimension, 256, 64, 1}, Activation::ReLU, Activation::Sigmoid, rng);
  return c;
}

double bce_loss(double prediction, int label) {
  const double p = std::clamp(prediction, kBceClamp, 1.0 - kBceClamp);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

Vector classifier_score(const Classifier& model, const Matrix& x) {
  if (x.rows() != model.net.in_size()) {
    throw ShapeError("classifier input has dimension " + std::to_string(x.rows()) + ", expected " +
                     std::to_string(model.net.in_size()));
  }
  return model.net.forward(x).row(0).transpose();
}

double classifier_score(const Classifier& model, const Vector& x) { return classifier_score(model, Matrix(x))[0]; }

double mean_bce(const Classifier& model, const Matrix& x, const Vector& labels, Vector* param_grad) {
  if (labels.size() != x.cols()) throw ShapeError("one label per sample required");
  if (x.cols() == 0) throw UsageError("mean_bce of an empty batch");
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  MlpTape tape;
  const Matrix p = param_grad ? model.net.forward(x, tape) : model.net.forward(x);
  double loss = 0.0;
  Matrix grad_out(1, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const int y = labels[i] > 0.5 ? 1 : 0;
    loss += bce_loss(p(0, i), y);
    const double clamped = std::clamp(p(0, i), kBceClamp, 1.0 - kBceClamp);
    // Zero gradient where the clamp is active.
    const bool inside = clamped == p(0, i);
    grad_out(0, i) = inside ? inv_n * (y ? -1.0 / clamped : 1.0 / (1.0 - clamped)) : 0.0;
  }
  loss *= inv_n;
  if (param_grad) {
    if (param_grad->size() != model.net.parameter_count()) throw ShapeError("classifier gradient buffer has wrong size");
    model.net.backward(tape, grad_out, {param_grad->data(), static_cast<std::size_t>(param_grad->size())});
  }
  return loss;
}

ClassifierTrainResult train_classifier(const Matrix& normal_train, const Matrix& anomaly_train,
                                       const Matrix& normal_validation, const TrainConfig& config,
                                       const ClassifierOptions& options, const Matrix& anomaly_validation) {
  config.validate();
  if (anomaly_train.cols() == 0) throw UsageError("the classifier baseline needs at least one anomaly for training");
  if (normal_train.cols() == 0 || normal_validation.cols() == 0) {
    throw UsageError("the classifier baseline needs normal training and validation samples");
  }
  const Eigen::Index d = normal_train.rows();
  if (anomaly_train.rows() != d || normal_validation.rows() != d) throw ShapeError("classifier data dimensions differ");

  Rng init_rng(Rng::derive(config.seed, 3));
  Rng shuffle_rng(Rng::derive(config.seed, 1));
  Rng anomaly_rng(Rng::derive(config.seed, 2));
  Classifier model = Classifier::make(d, init_rng);

  Matrix validation = normal_validation;
  Vector validation_labels = Vector::Zero(normal_validation.cols());
  if (options.mixed_validation && anomaly_validation.cols() > 0) {
    if (anomaly_validation.rows() != d) throw ShapeError("classifier data dimensions differ");
    validation.conservativeResize(d, normal_validation.cols() + anomaly_validation.cols());
    validation.rightCols(anomaly_validation.cols()) = anomaly_validation;
    validation_labels.conservativeResize(validation.cols());
    validation_labels.tail(anomaly_validation.cols()).setOnes();
  }

  Vector params(model.net.parameter_count());
  auto span_of = [](Vector& v) { return std::span<double>(v.data(), static_cast<std::size_t>(v.size())); };
  model.net.write_parameters(span_of(params));
  Vector best_params = params;
  double best_validation = std::numeric_limits<double>::infinity();
  AdamState adam = AdamState::for_size(params.size());
  PlateauScheduler scheduler(config.learning_rate, config.lr_factor, config.patience);
  double lr = config.learning_rate;

  ClassifierTrainResult result;
  const Eigen::Index n = normal_train.cols();
  Vector grad(params.size());
  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(static_cast<std::size_t>(n), shuffle_rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix batch(d, 2 * count);
      Vector labels(2 * count);
      for (Eigen::Index c = 0; c < count; ++c) {
        batch.col(c) = normal_train.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + c)]));
        labels[c] = 0.0;
        batch.col(count + c) =
            anomaly_train.col(static_cast<Eigen::Index>(anomaly_rng.index(static_cast<std::uint64_t>(anomaly_train.cols()))));
        labels[count + c] = 1.0;
      }
      grad.setZero();
      const double loss = mean_bce(model, batch, labels, &grad);
      if (!std::isfinite(loss)) throw TrainingDiverged("non-finite classifier loss", epoch);
      try {
        adam_step(adam, params, grad, lr);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(e.what(), epoch);
      }
      model.net.read_parameters({params.data(), static_cast<std::size_t>(params.size())});
      loss_sum += loss * static_cast<double>(count);
    }
    const double validation_loss = mean_bce(model, validation, validation_labels);
    const double train_loss = loss_sum / static_cast<double>(n);
    result.history.epochs.push_back({epoch, train_loss, train_loss, 0.0, validation_loss, lr});
    if (validation_loss < best_validation) {
      best_validation = validation_loss;
      best_params = params;
      result.history.best_epoch = epoch;
    }
    lr = scheduler.observe(validation_loss);
  }
  model.net.read_parameters({best_params.data(), static_cast<std::size_t>(best_params.size())});
  result.model = std::move(model);
  return result;
}

ModelSection to_section(const Classifier& model, const std::string& kind) {
  ModelSection section;
  section.kind = kind;
  describe_mlp(section, "net", model.net);
  section.parameters.resize(static_cast<std::size_t>(model.net.parameter_count()));
  model.net.write_parameters(section.parameters);
  return section;
}

Classifier classifier_from_section(const ModelSection& section) {
  Classifier c;
  c.net = mlp_from_descriptor(section, "net");
  if (c.net.out_size() != 1) throw FormatError("classifier must have a single output");
  if (section.parameters.size() != static_cast<std::size_t>(c.net.parameter_count())) {
    throw FormatError("classifier section has the wrong number of parameters");
  }
  c.net.read_parameters(section.parameters);
  return c;
}

}  // namespace oeflow
