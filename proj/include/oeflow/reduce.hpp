#pragma once

#include <variant>
#include <vector>

#include "oeflow/exposure.hpp"
#include "oeflow/numerics.hpp"

namespace oeflow {

/// Dense undercomplete autoencoder: encoder input -> hidden... -> bottleneck,
/// decoder mirrors it back. Hidden layers use LeakyReLU; the bottleneck
/// output and the final decoder layer are linear.
struct Autoencoder {
  Mlp encoder;
  Mlp decoder;

  Eigen::Index input_dim() const { return encoder.in_size(); }
  Eigen::Index bottleneck() const { return encoder.out_size(); }
  void validate() const;  // ShapeError unless encoder/decoder chain and bottleneck < input
};

struct AutoencoderConfig {
  std::vector<Eigen::Index> hidden = {256};
  Eigen::Index bottleneck = 128;
  /// Linear activations everywhere (a linear autoencoder).
  bool linear = false;
  double learning_rate = 1e-3;
  long max_epochs = 100;
  long batch_size = 256;
  long patience = 10;
  double lr_factor = 10.0;
  std::uint64_t seed = 0;
};

struct AutoencoderTrainResult {
  Autoencoder model;
  TrainHistory history;  // validation_nll holds validation MSE; oe_part is 0
};

/// Minimizes mean squared reconstruction error on normal samples with Adam and
/// the plateau schedule; returns the lowest-validation-MSE checkpoint.
AutoencoderTrainResult train_autoencoder(const Matrix& normal_train, const Matrix& normal_validation,
                                         const AutoencoderConfig& config);

enum class ReconstructionKind { MAE, MSE };

Matrix reconstruct(const Autoencoder& ae, const Matrix& x);
double reconstruction_score(const Autoencoder& ae, const Vector& x, ReconstructionKind kind);
Vector reconstruction_score(const Autoencoder& ae, const Matrix& x, ReconstructionKind kind);
/// Mean over samples of the per-sample MSE.
double mean_reconstruction_mse(const Autoencoder& ae, const Matrix& x);

struct PcaReducer {
  Vector mean;
  Matrix components;  // bottleneck x input_dim, orthonormal rows

  Eigen::Index input_dim() const { return components.cols(); }
  Eigen::Index bottleneck() const { return components.rows(); }
};

/// Top eigenvectors of the sample covariance, sign-normalized so each
/// component's largest-magnitude entry is positive. Warns on stderr when the
/// covariance rank is below the bottleneck (remaining rows are an arbitrary
/// orthonormal complement).
PcaReducer pca_fit(const Matrix& normal_train, Eigen::Index bottleneck);
Matrix pca_transform(const PcaReducer& pca, const Matrix& x);
Vector pca_transform(const PcaReducer& pca, const Vector& x);
Matrix pca_reconstruct(const PcaReducer& pca, const Matrix& code);

using Reducer = std::variant<Autoencoder, PcaReducer>;

Eigen::Index reducer_output_dim(const Reducer& reducer);
Eigen::Index reducer_input_dim(const Reducer& reducer);
Matrix encode(const Reducer& reducer, const Matrix& x);
Vector encode(const Reducer& reducer, const Vector& x);

ModelSection to_section(const Autoencoder& ae, const std::string& kind = "autoencoder");
Autoencoder autoencoder_from_section(const ModelSection& section);
/// Stores mean, components and "orthonormality_error" = max|C C^T - I|.
ModelSection to_section(const PcaReducer& pca, const std::string& kind = "pca");
PcaReducer pca_from_section(const ModelSection& section);

}  // namespace oeflow
