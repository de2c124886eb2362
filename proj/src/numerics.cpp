#include "oeflow/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "oeflow/errors.hpp"

namespace oeflow {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw UsageError("Rng::index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t value = engine_();
  while (value >= limit) value = engine_();
  return value % n;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined key.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::Linear: return "linear";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "leaky_relu") return Activation::LeakyReLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw FormatError("unknown activation '" + name + "'");
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void apply_activation(Activation activation, double slope, const Matrix& pre, Matrix& out) {
  switch (activation) {
    case Activation::Linear: out = pre; break;
    case Activation::LeakyReLU: out = pre.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; }); break;
    case Activation::ReLU: out = pre.cwiseMax(0.0); break;
    case Activation::Sigmoid: out = pre.unaryExpr([](double v) { return sigmoid(v); }); break;
    case Activation::Tanh: out = pre.array().tanh().matrix(); break;
  }
}

// grad (w.r.t. activation output) -> grad w.r.t. pre-activation, in place.
void chain_activation(Activation activation, double slope, const Matrix& pre, Matrix& grad) {
  switch (activation) {
    case Activation::Linear: break;
    case Activation::LeakyReLU:
      grad = grad.binaryExpr(pre, [slope](double g, double v) { return v > 0 ? g : slope * g; });
      break;
    case Activation::ReLU:
      grad = grad.binaryExpr(pre, [](double g, double v) { return v > 0 ? g : 0.0; });
      break;
    case Activation::Sigmoid:
      grad = grad.binaryExpr(pre, [](double g, double v) {
        const double s = sigmoid(v);
        return g * s * (1.0 - s);
      });
      break;
    case Activation::Tanh:
      grad = grad.binaryExpr(pre, [](double g, double v) {
        const double t = std::tanh(v);
        return g * (1.0 - t * t);
      });
      break;
  }
}

}  // namespace

double activate(Activation activation, double x, double slope) {
  switch (activation) {
    case Activation::Linear: return x;
    case Activation::LeakyReLU: return x > 0 ? x : slope * x;
    case Activation::ReLU: return x > 0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation activation, double x, double slope) {
  switch (activation) {
    case Activation::Linear: return 1.0;
    case Activation::LeakyReLU: return x > 0 ? 1.0 : slope;
    case Activation::ReLU: return x > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

void DenseLayer::validate() const {
  if (bias.size() != weights.rows()) {
    throw ShapeError("dense layer: bias has " + std::to_string(bias.size()) + " entries, weights have " +
                     std::to_string(weights.rows()) + " rows");
  }
  if (!weights.allFinite() || !bias.allFinite()) {
    throw NumericError("dense layer: non-finite parameter");
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

Mlp Mlp::make(const std::vector<Eigen::Index>& sizes, Activation hidden, Activation output, Rng& rng) {
  if (sizes.size() < 2) throw UsageError("Mlp::make needs at least input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const Eigen::Index in = sizes[i];
    const Eigen::Index out = sizes[i + 1];
    if (in < 1 || out < 1) throw UsageError("Mlp::make: layer sizes must be positive");
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weights.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

Eigen::Index Mlp::in_size() const { return layers_.empty() ? 0 : layers_.front().in_size(); }
Eigen::Index Mlp::out_size() const { return layers_.empty() ? 0 : layers_.back().out_size(); }

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.parameter_count();
  return n;
}

void Mlp::validate() const {
  if (layers_.empty()) throw ShapeError("mlp has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].validate();
    if (i > 0 && layers_[i].in_size() != layers_[i - 1].out_size()) {
      throw ShapeError("mlp layer " + std::to_string(i) + " expects " + std::to_string(layers_[i].in_size()) +
                       " inputs, previous layer produces " + std::to_string(layers_[i - 1].out_size()));
    }
  }
}

Vector Mlp::forward(const Vector& input) const {
  Matrix batch = input;
  return forward(batch).col(0);
}

Matrix Mlp::forward(const Matrix& batch) const {
  if (batch.rows() != in_size()) {
    throw ShapeError("mlp input has " + std::to_string(batch.rows()) + " rows, expected " +
                     std::to_string(in_size()));
  }
  Matrix current = batch;
  Matrix pre;
  for (const auto& layer : layers_) {
    pre.noalias() = layer.weights * current;
    pre.colwise() += layer.bias;
    apply_activation(layer.activation, layer.slope, pre, current);
  }
  return current;
}

Matrix Mlp::forward(const Matrix& batch, MlpTape& tape) const {
  if (batch.rows() != in_size()) {
    throw ShapeError("mlp input has " + std::to_string(batch.rows()) + " rows, expected " +
                     std::to_string(in_size()));
  }
  tape.inputs.resize(layers_.size());
  tape.preactivations.resize(layers_.size());
  Matrix current = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    tape.inputs[i] = std::move(current);
    Matrix& pre = tape.preactivations[i];
    pre.noalias() = layer.weights * tape.inputs[i];
    pre.colwise() += layer.bias;
    apply_activation(layer.activation, layer.slope, pre, current);
  }
  return current;
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& output_gradient, std::span<double> param_grad) const {
  if (output_gradient.rows() != out_size()) {
    throw ShapeError("mlp output gradient has " + std::to_string(output_gradient.rows()) + " rows, expected " +
                     std::to_string(out_size()));
  }
  if (tape.inputs.size() != layers_.size()) throw UsageError("mlp backward without a matching taped forward");
  if (static_cast<Eigen::Index>(param_grad.size()) != parameter_count()) {
    throw ShapeError("mlp parameter gradient buffer has wrong size");
  }
  std::vector<Eigen::Index> offsets(layers_.size());
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = offset;
    offset += layers_[i].parameter_count();
  }
  Matrix grad = output_gradient;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    chain_activation(layer.activation, layer.slope, tape.preactivations[k], grad);
    Eigen::Map<Matrix> grad_w(param_grad.data() + offsets[k], layer.out_size(), layer.in_size());
    Eigen::Map<Vector> grad_b(param_grad.data() + offsets[k] + layer.weights.size(), layer.out_size());
    grad_w.noalias() += grad * tape.inputs[k].transpose();
    grad_b.noalias() += grad.rowwise().sum();
    Matrix next = layer.weights.transpose() * grad;
    grad = std::move(next);
  }
  return grad;
}

void Mlp::write_parameters(std::span<double> out) const {
  if (static_cast<Eigen::Index>(out.size()) != parameter_count()) throw ShapeError("mlp parameter buffer has wrong size");
  double* cursor = out.data();
  for (const auto& layer : layers_) {
    std::copy(layer.weights.data(), layer.weights.data() + layer.weights.size(), cursor);
    cursor += layer.weights.size();
    std::copy(layer.bias.data(), layer.bias.data() + layer.bias.size(), cursor);
    cursor += layer.bias.size();
  }
}

void Mlp::read_parameters(std::span<const double> in) {
  if (static_cast<Eigen::Index>(in.size()) != parameter_count()) throw ShapeError("mlp parameter buffer has wrong size");
  const double* cursor = in.data();
  for (auto& layer : layers_) {
    std::copy(cursor, cursor + layer.weights.size(), layer.weights.data());
    cursor += layer.weights.size();
    std::copy(cursor, cursor + layer.bias.size(), layer.bias.data());
    cursor += layer.bias.size();
  }
}

MlpGradient mlp_backward(const Mlp& model, const Vector& input, const Vector& output_gradient) {
  MlpTape tape;
  model.forward(Matrix(input), tape);
  MlpGradient result;
  result.parameters = Vector::Zero(model.parameter_count());
  Matrix grad_out = output_gradient;
  result.input = model.backward(tape, grad_out, {result.parameters.data(), static_cast<std::size_t>(result.parameters.size())}).col(0);
  return result;
}

void describe_mlp(ModelSection& section, const std::string& prefix, const Mlp& model) {
  section.set(prefix + ".layers", std::to_string(model.layers().size()));
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    section.set(prefix + ".layer" + std::to_string(i), std::to_string(layer.in_size()) + " " +
                                                           std::to_string(layer.out_size()) + " " +
                                                           to_string(layer.activation) + " " + format_double(layer.slope));
  }
}

Mlp mlp_from_descriptor(const ModelSection& section, const std::string& prefix) {
  const long count = section.get_long(prefix + ".layers");
  std::vector<DenseLayer> layers;
  for (long i = 0; i < count; ++i) {
    std::istringstream fields(section.get(prefix + ".layer" + std::to_string(i)));
    std::string in, out, activation, slope;
    if (!(fields >> in >> out >> activation >> slope)) throw FormatError("malformed layer descriptor in " + prefix);
    DenseLayer layer;
    layer.weights = Matrix::Zero(parse_long(out), parse_long(in));
    layer.bias = Vector::Zero(parse_long(out));
    layer.activation = activation_from_string(activation);
    layer.slope = parse_double(slope);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

AdamState AdamState::for_size(Eigen::Index n) {
  AdamState state;
  state.first_moment = Vector::Zero(n);
  state.second_moment = Vector::Zero(n);
  return state;
}

void adam_step(AdamState& state, Vector& params, const Vector& grads, double lr) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient and parameter sizes differ");
  if (state.first_moment.size() != params.size()) {
    if (state.step != 0) throw ShapeError("adam_step: optimizer state does not match parameters");
    state.first_moment = Vector::Zero(params.size());
    state.second_moment = Vector::Zero(params.size());
  }
  if (!grads.allFinite()) throw TrainingDiverged("non-finite gradient");
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double eps = state.epsilon;
  params.array() -= lr * (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + eps);
}

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, long patience, double min_relative_improvement)
    : lr_(initial_lr),
      factor_(factor),
      patience_(patience),
      min_relative_improvement_(min_relative_improvement),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(initial_lr > 0)) throw UsageError("learning rate must be positive");
  if (!(factor > 1)) throw UsageError("plateau reduction factor must exceed 1");
  if (patience < 1) throw UsageError("plateau patience must be at least 1");
}

double PlateauScheduler::observe(double validation_loss) {
  // Threshold on |best| so negative losses (NLL can be < 0) are handled.
  const bool improved = std::isinf(best_) ? std::isfinite(validation_loss)
                                          : validation_loss < best_ - min_relative_improvement_ * std::abs(best_);
  if (improved) {
    best_ = validation_loss;
    since_improvement_ = 0;
    return lr_;
  }
  ++since_improvement_;
  if (since_improvement_ > patience_) {
    lr_ /= factor_;
    since_improvement_ = 0;
  }
  return lr_;
}

GradcheckResult gradcheck(const LossWithGradient& loss, const Vector& params, double epsilon, double floor) {
  Vector analytic = Vector::Zero(params.size());
  loss(params, &analytic);
  GradcheckResult result;
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + epsilon;
    const double plus = loss(probe, nullptr);
    probe[i] = params[i] - epsilon;
    const double minus = loss(probe, nullptr);
    probe[i] = params[i];
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double error = std::abs(analytic[i] - numeric) / scale;
    if (!(error <= result.max_relative_error)) {
      result.max_relative_error = error;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace oeflow
