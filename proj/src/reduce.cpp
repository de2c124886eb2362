#include "oeflow/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "oeflow/errors.hpp"

namespace oeflow {

void Autoencoder::validate() const {
  encoder.validate();
  decoder.validate();
  if (decoder.in_size() != encoder.out_size() || decoder.out_size() != encoder.in_size()) {
    throw ShapeError("decoder does not mirror the encoder's dimensions");
  }
  if (!(bottleneck() < input_dim())) {
    throw ShapeError("autoencoder bottleneck " + std::to_string(bottleneck()) + " must be smaller than input dimension " +
                     std::to_string(input_dim()));
  }
}

Matrix reconstruct(const Autoencoder& ae, const Matrix& x) { return ae.decoder.forward(ae.encoder.forward(x)); }

Vector reconstruction_score(const Autoencoder& ae, const Matrix& x, ReconstructionKind kind) {
  const Matrix diff = reconstruct(ae, x) - x;
  const double inv_d = 1.0 / static_cast<double>(x.rows());
  if (kind == ReconstructionKind::MAE) return diff.cwiseAbs().colwise().sum().transpose() * inv_d;
  return diff.colwise().squaredNorm().transpose() * inv_d;
}

double reconstruction_score(const Autoencoder& ae, const Vector& x, ReconstructionKind kind) {
  return reconstruction_score(ae, Matrix(x), kind)[0];
}

double mean_reconstruction_mse(const Autoencoder& ae, const Matrix& x) {
  if (x.cols() == 0) throw UsageError("reconstruction error of an empty set");
  return reconstruction_score(ae, x, ReconstructionKind::MSE).mean();
}

AutoencoderTrainResult train_autoencoder(const Matrix& normal_train, const Matrix& normal_validation,
                                         const AutoencoderConfig& config) {
  if (normal_train.cols() == 0 || normal_validation.cols() == 0) {
    throw UsageError("train_autoencoder needs normal training and validation samples");
  }
  if (normal_validation.rows() != normal_train.rows()) throw ShapeError("train/validation dimensions differ");
  if (config.batch_size < 1 || config.max_epochs < 1) throw UsageError("autoencoder batch size and epochs must be >= 1");
  const Eigen::Index d = normal_train.rows();
  Rng init_rng(Rng::derive(config.seed, 3));
  Rng shuffle_rng(Rng::derive(config.seed, 1));
  const Activation hidden = config.linear ? Activation::Linear : Activation::LeakyReLU;

  std::vector<Eigen::Index> enc_sizes{d};
  enc_sizes.insert(enc_sizes.end(), config.hidden.begin(), config.hidden.end());
  enc_sizes.push_back(config.bottleneck);
  std::vector<Eigen::Index> dec_sizes(enc_sizes.rbegin(), enc_sizes.rend());
  Autoencoder ae{Mlp::make(enc_sizes, hidden, Activation::Linear, init_rng),
                 Mlp::make(dec_sizes, hidden, Activation::Linear, init_rng)};
  ae.validate();

  const Eigen::Index n_enc = ae.encoder.parameter_count();
  const Eigen::Index n_params = n_enc + ae.decoder.parameter_count();
  Vector params(n_params);
  auto pull = [&]() {
    ae.encoder.write_parameters({params.data(), static_cast<std::size_t>(n_enc)});
    ae.decoder.write_parameters({params.data() + n_enc, static_cast<std::size_t>(n_params - n_enc)});
  };
  auto push = [&]() {
    ae.encoder.read_parameters({params.data(), static_cast<std::size_t>(n_enc)});
    ae.decoder.read_parameters({params.data() + n_enc, static_cast<std::size_t>(n_params - n_enc)});
  };
  pull();

  AdamState adam = AdamState::for_size(n_params);
  PlateauScheduler scheduler(config.learning_rate, config.lr_factor, config.patience);
  double lr = config.learning_rate;
  Vector best_params = params;
  double best_validation = std::numeric_limits<double>::infinity();
  AutoencoderTrainResult result;
  const Eigen::Index n = normal_train.cols();
  Vector grad(n_params);
  Matrix batch;
  MlpTape enc_tape, dec_tape;
  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(static_cast<std::size_t>(n), shuffle_rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
      batch.resize(d, count);
      for (Eigen::Index c = 0; c < count; ++c) {
        batch.col(c) = normal_train.col(static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + c)]));
      }
      const Matrix code = ae.encoder.forward(batch, enc_tape);
      const Matrix out = ae.decoder.forward(code, dec_tape);
      const Matrix diff = out - batch;
      const double scale = 1.0 / static_cast<double>(d * count);
      const double loss = diff.squaredNorm() * scale;
      if (!std::isfinite(loss)) throw TrainingDiverged("non-finite autoencoder loss", epoch);
      grad.setZero();
      const Matrix grad_code = ae.decoder.backward(dec_tape, 2.0 * scale * diff,
                                                   {grad.data() + n_enc, static_cast<std::size_t>(n_params - n_enc)});
      ae.encoder.backward(enc_tape, grad_code, {grad.data(), static_cast<std::size_t>(n_enc)});
      try {
        adam_step(adam, params, grad, lr);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(e.what(), epoch);
      }
      push();
      loss_sum += loss * static_cast<double>(count);
    }
    const double validation = mean_reconstruction_mse(ae, normal_validation);
    if (!std::isfinite(validation)) throw TrainingDiverged("non-finite autoencoder validation loss", epoch);
    const double train_loss = loss_sum / static_cast<double>(n);
    result.history.epochs.push_back({epoch, train_loss, train_loss, 0.0, validation, lr});
    if (validation < best_validation) {
      best_validation = validation;
      best_params = params;
      result.history.best_epoch = epoch;
    }
    lr = scheduler.observe(validation);
  }
  params = best_params;
  push();
  result.model = std::move(ae);
  return result;
}

PcaReducer pca_fit(const Matrix& normal_train, Eigen::Index bottleneck) {
  const Eigen::Index d = normal_train.rows();
  const Eigen::Index n = normal_train.cols();
  if (bottleneck < 1 || bottleneck > d) throw UsageError("PCA bottleneck must lie in [1, input dimension]");
  if (n < bottleneck + 1) throw UsageError("PCA needs at least bottleneck + 1 samples");
  PcaReducer pca;
  pca.mean = normal_train.rowwise().mean();
  const Matrix centered = normal_train.colwise() - pca.mean;
  const Matrix covariance = centered * centered.transpose() / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(covariance);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  // Eigenvalues ascend; take the last `bottleneck` columns in descending order.
  const Vector& values = solver.eigenvalues();
  const Matrix& vectors = solver.eigenvectors();
  pca.components.resize(bottleneck, d);
  for (Eigen::Index k = 0; k < bottleneck; ++k) {
    Vector v = vectors.col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    pca.components.row(k) = v.transpose();
  }
  const double top = std::max(values[d - 1], 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < d; ++k) rank += values[k] > 1e-12 * std::max(top, 1e-300) ? 1 : 0;
  if (rank < bottleneck) {
    std::cerr << "warning: PCA covariance rank " << rank << " is below bottleneck " << bottleneck
              << "; trailing components span an arbitrary orthonormal complement\n";
  }
  return pca;
}

Matrix pca_transform(const PcaReducer& pca, const Matrix& x) {
  if (x.rows() != pca.input_dim()) {
    throw ShapeError("PCA input has dimension " + std::to_string(x.rows()) + ", expected " + std::to_string(pca.input_dim()));
  }
  return pca.components * (x.colwise() - pca.mean);
}

Vector pca_transform(const PcaReducer& pca, const Vector& x) { return pca_transform(pca, Matrix(x)).col(0); }

Matrix pca_reconstruct(const PcaReducer& pca, const Matrix& code) {
  if (code.rows() != pca.bottleneck()) throw ShapeError("PCA code has wrong dimension");
  return (pca.components.transpose() * code).colwise() + pca.mean;
}

Eigen::Index reducer_output_dim(const Reducer& reducer) {
  return std::visit([](const auto& r) { return r.bottleneck(); }, reducer);
}

Eigen::Index reducer_input_dim(const Reducer& reducer) {
  return std::visit([](const auto& r) { return r.input_dim(); }, reducer);
}

Matrix encode(const Reducer& reducer, const Matrix& x) {
  if (x.rows() != reducer_input_dim(reducer)) {
    throw ShapeError("reducer input has dimension " + std::to_string(x.rows()) + ", expected " +
                     std::to_string(reducer_input_dim(reducer)));
  }
  if (const auto* ae = std::get_if<Autoencoder>(&reducer)) return ae->encoder.forward(x);
  return pca_transform(std::get<PcaReducer>(reducer), x);
}

Vector encode(const Reducer& reducer, const Vector& x) { return encode(reducer, Matrix(x)).col(0); }

ModelSection to_section(const Autoencoder& ae, const std::string& kind) {
  ModelSection section;
  section.kind = kind;
  describe_mlp(section, "encoder", ae.encoder);
  describe_mlp(section, "decoder", ae.decoder);
  section.parameters.resize(static_cast<std::size_t>(ae.encoder.parameter_count() + ae.decoder.parameter_count()));
  const auto n_enc = static_cast<std::size_t>(ae.encoder.parameter_count());
  ae.encoder.write_parameters({section.parameters.data(), n_enc});
  ae.decoder.write_parameters({section.parameters.data() + n_enc, section.parameters.size() - n_enc});
  return section;
}

Autoencoder autoencoder_from_section(const ModelSection& section) {
  Autoencoder ae{mlp_from_descriptor(section, "encoder"), mlp_from_descriptor(section, "decoder")};
  ae.validate();
  const auto n_enc = static_cast<std::size_t>(ae.encoder.parameter_count());
  if (section.parameters.size() != n_enc + static_cast<std::size_t>(ae.decoder.parameter_count())) {
    throw FormatError("autoencoder section has the wrong number of parameters");
  }
  ae.encoder.read_parameters({section.parameters.data(), n_enc});
  ae.decoder.read_parameters({section.parameters.data() + n_enc, section.parameters.size() - n_enc});
  return ae;
}

ModelSection to_section(const PcaReducer& pca, const std::string& kind) {
  ModelSection section;
  section.kind = kind;
  section.set("input_dim", std::to_string(pca.input_dim()));
  section.set("bottleneck", std::to_string(pca.bottleneck()));
  const Matrix gram = pca.components * pca.components.transpose();
  const double error = (gram - Matrix::Identity(pca.bottleneck(), pca.bottleneck())).cwiseAbs().maxCoeff();
  section.set("orthonormality_error", format_double(error));
  section.parameters.assign(pca.mean.data(), pca.mean.data() + pca.mean.size());
  section.parameters.insert(section.parameters.end(), pca.components.data(), pca.components.data() + pca.components.size());
  return section;
}

PcaReducer pca_from_section(const ModelSection& section) {
  const long d = section.get_long("input_dim");
  const long k = section.get_long("bottleneck");
  if (d < 1 || k < 1 || k > d || section.parameters.size() != static_cast<std::size_t>(d + k * d)) {
    throw FormatError("pca section has inconsistent sizes");
  }
  PcaReducer pca;
  pca.mean = Eigen::Map<const Vector>(section.parameters.data(), d);
  pca.components = Eigen::Map<const Matrix>(section.parameters.data() + d, k, d);
  const Matrix gram = pca.components * pca.components.transpose();
  if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8) {
    throw FormatError("pca components are not orthonormal");
  }
  return pca;
}

}  // namespace oeflow
