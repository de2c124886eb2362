#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "oeflow/flow.hpp"

namespace oeflow {

/// Optimization settings shared by every trained detector. Defaults are the
/// outlier-exposed Real-NVP protocol: lambda 1, gamma 100, Adam at 1e-3 for
/// 500 epochs, lr / 10 after a 10-epoch validation plateau.
struct TrainConfig {
  double lambda = 1.0;
  double gamma = 100.0;
  double learning_rate = 1e-3;
  long max_epochs = 500;
  long batch_size = 256;
  long anomaly_batch_size = 256;
  std::uint64_t seed = 0;
  long patience = 10;
  double lr_factor = 10.0;

  void validate() const;  // UsageError
};

struct EpochRecord {
  long epoch = 0;  // 1-based
  double total_loss = 0.0;
  double nll_part = 0.0;
  double oe_part = 0.0;
  double validation_nll = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  long best_epoch = 0;  // 1-based, 0 before any epoch
};

/// Hinge max(0, gamma + nll_normal - nll_anomaly).
double margin_loss(double nll_normal, double nll_anomaly, double gamma);

struct BatchLoss {
  double total = 0.0;
  double nll_part = 0.0;
  double oe_part = 0.0;
};

/// Mean NLL over the normal batch plus lambda times the mean margin loss over
/// element-wise (normal, anomaly) pairs. With batch sizes B and A the pairs are
/// (k mod B, k mod A) for k < max(B, A). An empty anomaly batch gives oe_part 0.
///
/// When param_grad is non-null the gradient of total is added to it. The
/// hinge's subgradient at exactly zero margin is taken as 0.
BatchLoss combined_batch_loss(const FlowModel& model, const Matrix& normal_batch, const Matrix& anomaly_batch,
                              double lambda, double gamma, Vector* param_grad = nullptr);

struct FlowTrainResult {
  FlowModel model;
  TrainHistory history;
};

/// Mini-batch Adam on combined_batch_loss with a plateau schedule on the
/// validation NLL (normal samples only); returns the best-validation
/// checkpoint. Anomalies are drawn with replacement per batch from an RNG
/// stream separate from the shuffling stream, so lambda = 0 reproduces plain
/// NLL training bit for bit. Throws TrainingDiverged with the epoch index.
FlowTrainResult train_flow(FlowModel model, const Matrix& normal_train, const Matrix& anomaly_train,
                           const Matrix& normal_validation, const TrainConfig& config);

/// Earliest 1-based epoch with minimal validation NLL. UsageError when empty.
long select_checkpoint(const TrainHistory& history);

/// Tab-separated: epoch total_loss nll_part oe_part val_nll lr.
void write_history(std::ostream& out, const TrainHistory& history);

/// Mean of nll over the columns of x, evaluated in chunks.
double mean_nll(const FlowModel& model, const Matrix& x);

}  // namespace oeflow
