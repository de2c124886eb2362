#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oeflow/container.hpp"
#include "oeflow/rng.hpp"

namespace oeflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Batches are stored column-major with one sample per column (dimension x count).

enum class Activation { Linear, LeakyReLU, ReLU, Sigmoid, Tanh };

inline constexpr double kDefaultLeakySlope = 0.01;

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

/// Element-wise activation value and derivative with respect to the pre-activation.
double activate(Activation activation, double x, double slope = kDefaultLeakySlope);
double activate_derivative(Activation activation, double x, double slope = kDefaultLeakySlope);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Linear;
  double slope = kDefaultLeakySlope;

  Eigen::Index in_size() const { return weights.cols(); }
  Eigen::Index out_size() const { return weights.rows(); }
  Eigen::Index parameter_count() const { return weights.size() + bias.size(); }

  /// Throws ShapeError / NumericError when the layer invariants do not hold.
  void validate() const;
};

/// Per-layer intermediates recorded by a taped forward pass.
struct MlpTape {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> preactivations;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. sizes = {in, hidden..., out}.
  static Mlp make(const std::vector<Eigen::Index>& sizes, Activation hidden, Activation output,
                  Rng& rng);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index in_size() const;
  Eigen::Index out_size() const;
  Eigen::Index parameter_count() const;

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, MlpTape& tape) const;

  /// Reverse pass over a taped forward. Accumulates (+=) d loss/d params into
  /// param_grad, laid out like parameters(), and returns d loss/d input.
  Matrix backward(const MlpTape& tape, const Matrix& output_gradient,
                  std::span<double> param_grad) const;

  /// Flat layout: for each layer, weights (column-major) then bias.
  void write_parameters(std::span<double> out) const;
  void read_parameters(std::span<const double> in);

  void validate() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Gradients of a single-sample forward, for callers that do not batch.
struct MlpGradient {
  Vector parameters;
  Vector input;
};
MlpGradient mlp_backward(const Mlp& model, const Vector& input, const Vector& output_gradient);

/// Architecture descriptor entries "<prefix>.layers" and "<prefix>.layer<i>" (in out activation slope).
void describe_mlp(ModelSection& section, const std::string& prefix, const Mlp& model);
/// Zero-parameter Mlp with the architecture recorded by describe_mlp.
Mlp mlp_from_descriptor(const ModelSection& section, const std::string& prefix);

struct AdamState {
  long step = 0;
  Vector first_moment;
  Vector second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n);
};

/// One bias-corrected Adam update in place. Throws TrainingDiverged on a
/// non-finite gradient, leaving params and state untouched.
void adam_step(AdamState& state, Vector& params, const Vector& grads, double lr);

class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor = 10.0, long patience = 10,
                   double min_relative_improvement = 1e-4);

  /// Feed one epoch's validation loss; returns the learning rate to use next.
  double observe(double validation_loss);

  double current_lr() const { return lr_; }
  double best_metric() const { return best_; }
  long epochs_since_improvement() const { return since_improvement_; }
  double factor() const { return factor_; }
  long patience() const { return patience_; }

 private:
  double lr_;
  double factor_;
  long patience_;
  double min_relative_improvement_;
  double best_;
  long since_improvement_ = 0;
};

/// Loss evaluated at params; writes the analytic gradient when grad != nullptr.
using LossWithGradient = std::function<double(const Vector& params, Vector* grad)>;

struct GradcheckResult {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
};

/// Central differences (L(p+e) - L(p-e)) / 2e per coordinate against the analytic
/// gradient. Relative error is |a - n| / max(|a|, |n|, floor) with floor = 1e-3,
/// so coordinates whose true gradient is ~0 are judged on absolute error.
GradcheckResult gradcheck(const LossWithGradient& loss, const Vector& params, double epsilon = 1e-5,
                          double floor = 1e-3);

}  // namespace oeflow
