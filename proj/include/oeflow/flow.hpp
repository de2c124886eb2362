#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "oeflow/container.hpp"
#include "oeflow/numerics.hpp"

namespace oeflow {

/// Affine coupling layer.
///
/// Coordinates with mask == true pass through unchanged; the others are
/// transformed as y_u = x_u * exp(s(x_m)) + t(x_m) where
/// s = clamp * tanh(scale_net(x_m)) and t = translate_net(x_m).
/// The Jacobian is triangular, so log|det| = sum(s).
class CouplingLayer {
 public:
  CouplingLayer(std::vector<bool> mask, Mlp scale_net, Mlp translate_net, double clamp);

  /// Builds both networks as passive -> hidden (LeakyReLU) -> active with
  /// Glorot init; the scale net ends in Tanh, the translate net is linear.
  static CouplingLayer make(std::vector<bool> mask, Eigen::Index hidden, double clamp, Rng& rng);

  const std::vector<bool>& mask() const { return mask_; }
  const std::vector<Eigen::Index>& passive() const { return passive_; }
  const std::vector<Eigen::Index>& active() const { return active_; }
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(mask_.size()); }
  double clamp() const { return clamp_; }
  const Mlp& scale_net() const { return scale_net_; }
  const Mlp& translate_net() const { return translate_net_; }
  Mlp& scale_net() { return scale_net_; }
  Mlp& translate_net() { return translate_net_; }
  Eigen::Index parameter_count() const { return scale_net_.parameter_count() + translate_net_.parameter_count(); }

 private:
  std::vector<bool> mask_;
  std::vector<Eigen::Index> passive_;
  std::vector<Eigen::Index> active_;
  Mlp scale_net_;
  Mlp translate_net_;
  double clamp_;
};

struct FlowOutput {
  Vector z;
  double log_det = 0.0;
};

struct FlowBatchOutput {
  Matrix z;        // d x n
  Vector log_det;  // n
};

struct FlowArchitecture {
  Eigen::Index dimension = 128;
  int coupling_layers = 4;
  Eigen::Index hidden = 128;
  double clamp = 4.0;
  /// true: layers alternate odds/evens pass-through; false: every layer uses
  /// odds, leaving the odd coordinates untransformed.
  bool alternate_masks = true;
};

/// Mask with odd (0-based) coordinates passing through when odd == true,
/// even coordinates otherwise.
std::vector<bool> parity_mask(Eigen::Index dimension, bool odd);

class FlowModel {
 public:
  FlowModel() = default;
  /// ShapeError unless every coordinate is transformed by at least one layer;
  /// require_coverage = false admits single-mask stacks.
  explicit FlowModel(std::vector<CouplingLayer> layers, bool require_coverage = true);

  static FlowModel make(const FlowArchitecture& arch, Rng& rng);

  Eigen::Index dimension() const { return dimension_; }
  bool requires_coverage() const { return require_coverage_; }

  /// Fixed element-wise standardization u = (x - shift) / scale applied before
  /// the coupling layers. It is part of the bijection (contributing
  /// -sum(log scale) to log_det) but holds no trainable parameters.
  /// Identity by default.
  void set_standardization(const Vector& shift, const Vector& scale);
  /// Mean and standard deviation (floored at 1e-6) of the columns of x.
  void fit_standardization(const Matrix& x);
  const Vector& input_shift() const { return shift_; }
  const Vector& input_scale() const { return scale_; }
  double standardization_log_det() const { return standardization_log_det_; }

  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }

  Eigen::Index parameter_count() const;
  /// Layer by layer: scale net parameters then translate net parameters.
  Vector parameters() const;
  void set_parameters(const Vector& params);

 private:
  std::vector<CouplingLayer> layers_;
  Eigen::Index dimension_ = 0;
  bool require_coverage_ = true;
  Vector shift_;
  Vector scale_;
  double standardization_log_det_ = 0.0;
};

std::pair<Vector, double> coupling_forward(const CouplingLayer& layer, const Vector& x);
Vector coupling_inverse(const CouplingLayer& layer, const Vector& y);
FlowBatchOutput coupling_forward(const CouplingLayer& layer, const Matrix& x);
Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& y);

FlowOutput flow_forward(const FlowModel& model, const Vector& x);
FlowBatchOutput flow_forward(const FlowModel& model, const Matrix& x);
Vector flow_inverse(const FlowModel& model, const Vector& z);
Matrix flow_inverse(const FlowModel& model, const Matrix& z);

/// (d/2) log(2 pi) + |z|^2 / 2 - log_det.
double nll(const FlowModel& model, const Vector& x);
Vector nll(const FlowModel& model, const Matrix& x);

/// Anomaly score of a flow: the negative log-likelihood.
double anomaly_score(const FlowModel& model, const Vector& x);
Vector anomaly_score(const FlowModel& model, const Matrix& x);

/// Draws count standard-normal latents and maps them back to data space.
/// Returns d x count.
Matrix flow_sample(const FlowModel& model, Eigen::Index count, std::uint64_t seed);

/// Tape for differentiating per-sample NLLs of a batch.
struct FlowTape {
  struct Layer {
    Matrix passive;     // x_m
    Matrix active_in;   // x_u
    Matrix scale;       // s
    MlpTape scale_tape;
    MlpTape translate_tape;
  };
  std::vector<Layer> layers;
  Matrix z;
  Vector input_scale;
};

/// Per-sample NLL of a batch, recording what nll_backward needs.
Vector nll_taped(const FlowModel& model, const Matrix& x, FlowTape& tape);

/// Adds d(sum_i weights_i * nll_i)/d theta to param_grad (layout of parameters()).
/// Returns d(sum_i weights_i * nll_i)/d x as d x n.
Matrix nll_backward(const FlowModel& model, const FlowTape& tape, const Vector& weights,
                    std::span<double> param_grad);

ModelSection to_section(const FlowModel& model, const std::string& kind = "flow");
FlowModel flow_from_section(const ModelSection& section);

}  // namespace oeflow
