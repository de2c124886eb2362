#include "oeflow/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "oeflow/errors.hpp"

namespace oeflow {

void TrainConfig::validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw UsageError("lambda must be a finite value >= 0");
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw UsageError("gamma must be a finite value >= 0");
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be > 0");
  if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (batch_size < 1 || anomaly_batch_size < 1) throw UsageError("batch sizes must be >= 1");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (!(lr_factor > 1)) throw UsageError("lr_factor must be > 1");
}

double margin_loss(double nll_normal, double nll_anomaly, double gamma) {
  return std::max(0.0, gamma + nll_normal - nll_anomaly);
}

BatchLoss combined_batch_loss(const FlowModel& model, const Matrix& normal_batch, const Matrix& anomaly_batch,
                              double lambda, double gamma, Vector* param_grad) {
  if (normal_batch.cols() == 0) throw UsageError("combined_batch_loss: normal batch is empty");
  if (param_grad && param_grad->size() != model.parameter_count()) {
    throw ShapeError("combined_batch_loss: gradient buffer has wrong size");
  }
  const Eigen::Index n_normal = normal_batch.cols();
  const Eigen::Index n_anomaly = anomaly_batch.cols();

  FlowTape normal_tape;
  const Vector normal_nll = nll_taped(model, normal_batch, normal_tape);
  Vector normal_weights = Vector::Constant(n_normal, 1.0 / static_cast<double>(n_normal));

  BatchLoss loss;
  loss.nll_part = normal_nll.mean();

  const bool differentiate_anomalies = param_grad && lambda != 0.0 && n_anomaly > 0;
  FlowTape anomaly_tape;
  Vector anomaly_weights;
  if (n_anomaly > 0) {
    const Vector anomaly_nll =
        differentiate_anomalies ? nll_taped(model, anomaly_batch, anomaly_tape) : nll(model, anomaly_batch);
    anomaly_weights = Vector::Zero(n_anomaly);
    const Eigen::Index pairs = std::max(n_normal, n_anomaly);
    const double pair_weight = lambda / static_cast<double>(pairs);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < pairs; ++k) {
      const Eigen::Index i = k % n_normal;
      const Eigen::Index j = k % n_anomaly;
      const double margin = margin_loss(normal_nll[i], anomaly_nll[j], gamma);
      sum += margin;
      if (margin > 0.0 && differentiate_anomalies) {
        normal_weights[i] += pair_weight;
        anomaly_weights[j] -= pair_weight;
      }
    }
    loss.oe_part = sum / static_cast<double>(pairs);
  }
  loss.total = loss.nll_part + lambda * loss.oe_part;
  if (!std::isfinite(loss.total)) throw TrainingDiverged("non-finite training loss");

  if (param_grad) {
    std::span<double> grad(param_grad->data(), static_cast<std::size_t>(param_grad->size()));
    nll_backward(model, normal_tape, normal_weights, grad);
    if (differentiate_anomalies) nll_backward(model, anomaly_tape, anomaly_weights, grad);
  }
  return loss;
}

double mean_nll(const FlowModel& model, const Matrix& x) {
  if (x.cols() == 0) throw UsageError("mean_nll of an empty set");
  constexpr Eigen::Index kChunk = 4096;
  double sum = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
    const Eigen::Index count = std::min(kChunk, x.cols() - start);
    sum += nll(model, Matrix(x.middleCols(start, count))).sum();
  }
  return sum / static_cast<double>(x.cols());
}

FlowTrainResult train_flow(FlowModel model, const Matrix& normal_train, const Matrix& anomaly_train,
                           const Matrix& normal_validation, const TrainConfig& config) {
  config.validate();
  if (normal_train.cols() == 0) throw UsageError("train_flow: no normal training samples");
  if (normal_validation.cols() == 0) throw UsageError("train_flow: no normal validation samples");
  const Eigen::Index d = model.dimension();
  if (normal_train.rows() != d || normal_validation.rows() != d || (anomaly_train.cols() > 0 && anomaly_train.rows() != d)) {
    throw ShapeError("train_flow: data dimension differs from flow dimension " + std::to_string(d));
  }

  Rng shuffle_rng(Rng::derive(config.seed, 1));
  Rng anomaly_rng(Rng::derive(config.seed, 2));
  Vector params = model.parameters();
  Vector best_params = params;
  double best_validation = std::numeric_limits<double>::infinity();
  AdamState adam = AdamState::for_size(params.size());
  PlateauScheduler scheduler(config.learning_rate, config.lr_factor, config.patience);
  double lr = config.learning_rate;

  FlowTrainResult result;
  const Eigen::Index n = normal_train.cols();
  Matrix normal_batch;
  Matrix anomaly_batch(d, 0);
  Vector grad(params.size());
  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(static_cast<std::size_t>(n), shuffle_rng);
    double total = 0.0, nll_sum = 0.0, oe_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
      normal_batch.resize(d, count);
      for (Eigen::Index c = 0; c < count; ++c) {
        normal_batch.col(c) = normal_train.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + c)]));
      }
      if (anomaly_train.cols() > 0) {
        anomaly_batch.resize(d, config.anomaly_batch_size);
        for (Eigen::Index c = 0; c < config.anomaly_batch_size; ++c) {
          anomaly_batch.col(c) = anomaly_train.col(static_cast<Eigen::Index>(anomaly_rng.index(static_cast<std::uint64_t>(anomaly_train.cols()))));
        }
      }
      grad.setZero();
      BatchLoss loss;
      try {
        loss = combined_batch_loss(model, normal_batch, anomaly_batch, config.lambda, config.gamma, &grad);
        adam_step(adam, params, grad, lr);
      } catch (const NumericError& e) {
        throw TrainingDiverged(e.what(), epoch);
      }
      model.set_parameters(params);
      const double weight = static_cast<double>(count);
      total += weight * loss.total;
      nll_sum += weight * loss.nll_part;
      oe_sum += weight * loss.oe_part;
    }
    double validation = 0.0;
    try {
      validation = mean_nll(model, normal_validation);
    } catch (const NumericError& e) {
      throw TrainingDiverged(e.what(), epoch);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    result.history.epochs.push_back({epoch, total * inv_n, nll_sum * inv_n, oe_sum * inv_n, validation, lr});
    if (validation < best_validation) {
      best_validation = validation;
      best_params = params;
      result.history.best_epoch = epoch;
    }
    lr = scheduler.observe(validation);
  }
  model.set_parameters(best_params);
  result.model = std::move(model);
  return result;
}

long select_checkpoint(const TrainHistory& history) {
  if (history.epochs.empty()) throw UsageError("select_checkpoint: no epochs recorded");
  long best = history.epochs.front().epoch;
  double best_value = history.epochs.front().validation_nll;
  for (const auto& record : history.epochs) {
    if (record.validation_nll < best_value) {
      best_value = record.validation_nll;
      best = record.epoch;
    }
  }
  return best;
}

void write_history(std::ostream& out, const TrainHistory& history) {
  out << "epoch\ttotal_loss\tnll_part\toe_part\tval_nll\tlr\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << '\t' << format_double(r.total_loss) << '\t' << format_double(r.nll_part) << '\t'
        << format_double(r.oe_part) << '\t' << format_double(r.validation_nll) << '\t' << format_double(r.learning_rate)
        << '\n';
  }
}

}  // namespace oeflow
