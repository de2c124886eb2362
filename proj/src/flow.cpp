#include "oeflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "oeflow/errors.hpp"

namespace oeflow {

namespace {

Matrix gather_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

void scatter_rows(Matrix& x, const std::vector<Eigen::Index>& rows, const Matrix& values) {
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(rows[r]) = values.row(static_cast<Eigen::Index>(r));
}

void check_dimension(Eigen::Index got, Eigen::Index expected, const char* what) {
  if (got != expected) {
    throw ShapeError(std::string(what) + ": input has dimension " + std::to_string(got) + ", flow expects " +
                     std::to_string(expected));
  }
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

CouplingLayer::CouplingLayer(std::vector<bool> mask, Mlp scale_net, Mlp translate_net, double clamp)
    : mask_(std::move(mask)), scale_net_(std::move(scale_net)), translate_net_(std::move(translate_net)), clamp_(clamp) {
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    (mask_[i] ? passive_ : active_).push_back(static_cast<Eigen::Index>(i));
  }
  if (passive_.empty() || active_.empty()) {
    throw ShapeError("coupling mask needs at least one pass-through and one transformed coordinate");
  }
  const auto n_passive = static_cast<Eigen::Index>(passive_.size());
  const auto n_active = static_cast<Eigen::Index>(active_.size());
  if (scale_net_.in_size() != n_passive || translate_net_.in_size() != n_passive ||
      scale_net_.out_size() != n_active || translate_net_.out_size() != n_active) {
    throw ShapeError("coupling networks must map " + std::to_string(n_passive) + " -> " + std::to_string(n_active));
  }
  if (!(clamp_ > 0) || !std::isfinite(clamp_)) throw UsageError("coupling clamp must be positive and finite");
}

CouplingLayer CouplingLayer::make(std::vector<bool> mask, Eigen::Index hidden, double clamp, Rng& rng) {
  Eigen::Index n_passive = 0;
  for (bool m : mask) n_passive += m ? 1 : 0;
  const Eigen::Index n_active = static_cast<Eigen::Index>(mask.size()) - n_passive;
  if (n_passive == 0 || n_active == 0) {
    throw ShapeError("coupling mask needs at least one pass-through and one transformed coordinate");
  }
  Mlp scale = Mlp::make({n_passive, hidden, n_active}, Activation::LeakyReLU, Activation::Tanh, rng);
  Mlp translate = Mlp::make({n_passive, hidden, n_active}, Activation::LeakyReLU, Activation::Linear, rng);
  return CouplingLayer(std::move(mask), std::move(scale), std::move(translate), clamp);
}

std::vector<bool> parity_mask(Eigen::Index dimension, bool odd) {
  std::vector<bool> mask(static_cast<std::size_t>(dimension));
  for (Eigen::Index i = 0; i < dimension; ++i) mask[static_cast<std::size_t>(i)] = (i % 2 == 1) == odd;
  return mask;
}

FlowModel::FlowModel(std::vector<CouplingLayer> layers, bool require_coverage) : layers_(std::move(layers)), require_coverage_(require_coverage) {
  if (layers_.empty()) throw ShapeError("flow needs at least one coupling layer");
  dimension_ = layers_.front().dimension();
  std::vector<bool> covered(static_cast<std::size_t>(dimension_), false);
  for (const auto& layer : layers_) {
    if (layer.dimension() != dimension_) throw ShapeError("coupling layers disagree on dimension");
    for (Eigen::Index i : layer.active()) covered[static_cast<std::size_t>(i)] = true;
  }
  for (std::size_t i = 0; i < covered.size() && require_coverage; ++i) {
    if (!covered[i]) throw ShapeError("coordinate " + std::to_string(i) + " is never transformed by any coupling layer");
  }
  shift_ = Vector::Zero(dimension_);
  scale_ = Vector::Ones(dimension_);
}

void FlowModel::set_standardization(const Vector& shift, const Vector& scale) {
  if (shift.size() != dimension_ || scale.size() != dimension_) throw ShapeError("standardization size differs from flow dimension");
  if (!shift.allFinite() || !scale.allFinite() || (scale.array() <= 0).any()) {
    throw NumericError("standardization needs finite shifts and positive finite scales");
  }
  shift_ = shift;
  scale_ = scale;
  standardization_log_det_ = -scale_.array().log().sum();
}

void FlowModel::fit_standardization(const Matrix& x) {
  if (x.rows() != dimension_ || x.cols() < 2) throw UsageError("fit_standardization needs at least two samples of the flow dimension");
  const Vector mean = x.rowwise().mean();
  const Vector sd = ((x.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(x.cols() - 1)).cwiseSqrt();
  set_standardization(mean, sd.cwiseMax(1e-6));
}

FlowModel FlowModel::make(const FlowArchitecture& arch, Rng& rng) {
  if (arch.dimension < 2) throw UsageError("flow dimension must be at least 2");
  if (arch.coupling_layers < 1) throw UsageError("flow needs at least one coupling layer");
  if (arch.hidden < 1) throw UsageError("coupling hidden width must be positive");
  std::vector<CouplingLayer> layers;
  for (int i = 0; i < arch.coupling_layers; ++i) {
    const bool odd = arch.alternate_masks ? (i % 2 == 0) : true;
    layers.push_back(CouplingLayer::make(parity_mask(arch.dimension, odd), arch.hidden, arch.clamp, rng));
  }
  return FlowModel(std::move(layers), arch.alternate_masks);
}

Eigen::Index FlowModel::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.parameter_count();
  return n;
}

Vector FlowModel::parameters() const {
  Vector params(parameter_count());
  double* cursor = params.data();
  for (const auto& layer : layers_) {
    const auto ns = static_cast<std::size_t>(layer.scale_net().parameter_count());
    const auto nt = static_cast<std::size_t>(layer.translate_net().parameter_count());
    layer.scale_net().write_parameters({cursor, ns});
    cursor += ns;
    layer.translate_net().write_parameters({cursor, nt});
    cursor += nt;
  }
  return params;
}

void FlowModel::set_parameters(const Vector& params) {
  if (params.size() != parameter_count()) throw ShapeError("flow parameter vector has wrong size");
  const double* cursor = params.data();
  for (auto& layer : layers_) {
    const auto ns = static_cast<std::size_t>(layer.scale_net().parameter_count());
    const auto nt = static_cast<std::size_t>(layer.translate_net().parameter_count());
    layer.scale_net().read_parameters({cursor, ns});
    cursor += ns;
    layer.translate_net().read_parameters({cursor, nt});
    cursor += nt;
  }
}

FlowBatchOutput coupling_forward(const CouplingLayer& layer, const Matrix& x) {
  check_dimension(x.rows(), layer.dimension(), "coupling_forward");
  const Matrix passive = gather_rows(x, layer.passive());
  const Matrix scale = layer.clamp() * layer.scale_net().forward(passive);
  const Matrix shift = layer.translate_net().forward(passive);
  FlowBatchOutput out;
  out.z = x;
  scatter_rows(out.z, layer.active(),
               (gather_rows(x, layer.active()).array() * scale.array().exp() + shift.array()).matrix());
  out.log_det = scale.colwise().sum().transpose();
  if (!out.z.allFinite() || !out.log_det.allFinite()) throw NumericError("coupling layer produced a non-finite output");
  return out;
}

Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& y) {
  check_dimension(y.rows(), layer.dimension(), "coupling_inverse");
  const Matrix passive = gather_rows(y, layer.passive());
  const Matrix scale = layer.clamp() * layer.scale_net().forward(passive);
  const Matrix shift = layer.translate_net().forward(passive);
  Matrix x = y;
  scatter_rows(x, layer.active(),
               ((gather_rows(y, layer.active()).array() - shift.array()) * (-scale.array()).exp()).matrix());
  return x;
}

std::pair<Vector, double> coupling_forward(const CouplingLayer& layer, const Vector& x) {
  auto out = coupling_forward(layer, Matrix(x));
  return {out.z.col(0), out.log_det[0]};
}

Vector coupling_inverse(const CouplingLayer& layer, const Vector& y) {
  return coupling_inverse(layer, Matrix(y)).col(0);
}

FlowBatchOutput flow_forward(const FlowModel& model, const Matrix& x) {
  check_dimension(x.rows(), model.dimension(), "flow_forward");
  FlowBatchOutput out;
  out.z = (x.colwise() - model.input_shift()).array().colwise() / model.input_scale().array();
  out.log_det = Vector::Constant(x.cols(), model.standardization_log_det());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    try {
      auto step = coupling_forward(model.layers()[i], out.z);
      out.z = std::move(step.z);
      out.log_det += step.log_det;
    } catch (const NumericError&) {
      throw NumericError("coupling layer " + std::to_string(i) + " produced a non-finite output");
    }
  }
  return out;
}

FlowOutput flow_forward(const FlowModel& model, const Vector& x) {
  auto out = flow_forward(model, Matrix(x));
  return {out.z.col(0), out.log_det[0]};
}

Matrix flow_inverse(const FlowModel& model, const Matrix& z) {
  check_dimension(z.rows(), model.dimension(), "flow_inverse");
  Matrix x = z;
  for (auto it = model.layers().rbegin(); it != model.layers().rend(); ++it) x = coupling_inverse(*it, x);
  return (x.array().colwise() * model.input_scale().array()).matrix().colwise() + model.input_shift();
}

Vector flow_inverse(const FlowModel& model, const Vector& z) { return flow_inverse(model, Matrix(z)).col(0); }

Vector nll(const FlowModel& model, const Matrix& x) {
  const auto out = flow_forward(model, x);
  const double constant = static_cast<double>(model.dimension()) * kHalfLog2Pi;
  Vector result = (0.5 * out.z.colwise().squaredNorm().transpose()).array() + constant;
  result -= out.log_det;
  if (!result.allFinite()) throw NumericError("non-finite negative log-likelihood");
  return result;
}

double nll(const FlowModel& model, const Vector& x) { return nll(model, Matrix(x))[0]; }

double anomaly_score(const FlowModel& model, const Vector& x) { return nll(model, x); }
Vector anomaly_score(const FlowModel& model, const Matrix& x) { return nll(model, x); }

Matrix flow_sample(const FlowModel& model, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw UsageError("flow_sample: count must be at least 1");
  Rng rng(seed);
  Matrix z(model.dimension(), count);
  for (Eigen::Index c = 0; c < count; ++c) {
    for (Eigen::Index r = 0; r < model.dimension(); ++r) z(r, c) = rng.normal();
  }
  return flow_inverse(model, z);
}

Vector nll_taped(const FlowModel& model, const Matrix& x, FlowTape& tape) {
  check_dimension(x.rows(), model.dimension(), "nll");
  tape.layers.resize(model.layers().size());
  tape.input_scale = model.input_scale();
  Matrix current = (x.colwise() - model.input_shift()).array().colwise() / model.input_scale().array();
  Vector log_det = Vector::Constant(x.cols(), model.standardization_log_det());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    auto& rec = tape.layers[i];
    rec.passive = gather_rows(current, layer.passive());
    rec.active_in = gather_rows(current, layer.active());
    rec.scale = layer.clamp() * layer.scale_net().forward(rec.passive, rec.scale_tape);
    const Matrix shift = layer.translate_net().forward(rec.passive, rec.translate_tape);
    scatter_rows(current, layer.active(), (rec.active_in.array() * rec.scale.array().exp() + shift.array()).matrix());
    log_det += rec.scale.colwise().sum().transpose();
    if (!current.allFinite()) throw NumericError("coupling layer " + std::to_string(i) + " produced a non-finite output");
  }
  tape.z = std::move(current);
  const double constant = static_cast<double>(model.dimension()) * kHalfLog2Pi;
  Vector result = (0.5 * tape.z.colwise().squaredNorm().transpose()).array() + constant;
  result -= log_det;
  if (!result.allFinite()) throw NumericError("non-finite negative log-likelihood");
  return result;
}

Matrix nll_backward(const FlowModel& model, const FlowTape& tape, const Vector& weights, std::span<double> param_grad) {
  if (weights.size() != tape.z.cols()) throw ShapeError("nll_backward: one weight per sample required");
  if (static_cast<Eigen::Index>(param_grad.size()) != model.parameter_count()) {
    throw ShapeError("nll_backward: parameter gradient buffer has wrong size");
  }
  // d nll / d z = z, d nll / d log_det = -1.
  Matrix grad = tape.z * weights.asDiagonal();
  const Eigen::RowVectorXd grad_log_det = -weights.transpose();

  std::vector<std::size_t> offsets(model.layers().size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    offsets[i] = offset;
    offset += static_cast<std::size_t>(model.layers()[i].parameter_count());
  }

  for (std::size_t k = model.layers().size(); k-- > 0;) {
    const auto& layer = model.layers()[k];
    const auto& rec = tape.layers[k];
    const Matrix grad_active_out = gather_rows(grad, layer.active());
    const Matrix grad_passive_out = gather_rows(grad, layer.passive());
    const Eigen::ArrayXXd exp_scale = rec.scale.array().exp();

    const Matrix grad_active_in = (grad_active_out.array() * exp_scale).matrix();
    Matrix grad_scale = (grad_active_out.array() * rec.active_in.array() * exp_scale).matrix();
    grad_scale.rowwise() += grad_log_det;
    const Matrix grad_scale_raw = layer.clamp() * grad_scale;

    const auto ns = static_cast<std::size_t>(layer.scale_net().parameter_count());
    const auto nt = static_cast<std::size_t>(layer.translate_net().parameter_count());
    const Matrix from_scale = layer.scale_net().backward(rec.scale_tape, grad_scale_raw, param_grad.subspan(offsets[k], ns));
    const Matrix from_shift =
        layer.translate_net().backward(rec.translate_tape, grad_active_out, param_grad.subspan(offsets[k] + ns, nt));

    scatter_rows(grad, layer.active(), grad_active_in);
    scatter_rows(grad, layer.passive(), grad_passive_out + from_scale + from_shift);
  }
  return (grad.array().colwise() / tape.input_scale.array()).matrix();
}

ModelSection to_section(const FlowModel& model, const std::string& kind) {
  ModelSection section;
  section.kind = kind;
  section.set("dimension", std::to_string(model.dimension()));
  section.set("coupling_layers", std::to_string(model.layers().size()));
  section.set("require_coverage", model.requires_coverage() ? "1" : "0");
  std::string shift, scale;
  for (Eigen::Index i = 0; i < model.dimension(); ++i) {
    shift += (i ? " " : "") + format_double(model.input_shift()[i]);
    scale += (i ? " " : "") + format_double(model.input_scale()[i]);
  }
  section.set("input_shift", shift);
  section.set("input_scale", scale);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    std::string mask;
    for (bool m : layer.mask()) mask += m ? '1' : '0';
    const std::string prefix = "coupling" + std::to_string(i);
    section.set(prefix + ".mask", mask);
    section.set(prefix + ".clamp", format_double(layer.clamp()));
    describe_mlp(section, prefix + ".scale", layer.scale_net());
    describe_mlp(section, prefix + ".translate", layer.translate_net());
  }
  const Vector params = model.parameters();
  section.parameters.assign(params.data(), params.data() + params.size());
  return section;
}

FlowModel flow_from_section(const ModelSection& section) {
  const long count = section.get_long("coupling_layers");
  const long dimension = section.get_long("dimension");
  std::vector<CouplingLayer> layers;
  for (long i = 0; i < count; ++i) {
    const std::string prefix = "coupling" + std::to_string(i);
    const std::string& text = section.get(prefix + ".mask");
    if (static_cast<long>(text.size()) != dimension) throw FormatError(prefix + ".mask length differs from dimension");
    std::vector<bool> mask;
    for (char c : text) {
      if (c != '0' && c != '1') throw FormatError(prefix + ".mask must be a 0/1 string");
      mask.push_back(c == '1');
    }
    layers.emplace_back(std::move(mask), mlp_from_descriptor(section, prefix + ".scale"),
                        mlp_from_descriptor(section, prefix + ".translate"), section.get_double(prefix + ".clamp"));
  }
  const auto require_coverage = section.find("require_coverage");
  FlowModel model(std::move(layers), !require_coverage || *require_coverage != "0");
  auto read_vector = [&](const std::string& key) {
    std::istringstream fields(section.get(key));
    Vector v(dimension);
    std::string token;
    for (long i = 0; i < dimension; ++i) {
      if (!(fields >> token)) throw FormatError(key + " has fewer than " + std::to_string(dimension) + " entries");
      v[i] = parse_double(token);
    }
    if (fields >> token) throw FormatError(key + " has too many entries");
    return v;
  };
  model.set_standardization(read_vector("input_shift"), read_vector("input_scale"));
  if (static_cast<Eigen::Index>(section.parameters.size()) != model.parameter_count()) {
    throw FormatError("flow section holds " + std::to_string(section.parameters.size()) + " parameters, architecture needs " +
                      std::to_string(model.parameter_count()));
  }
  model.set_parameters(Eigen::Map<const Vector>(section.parameters.data(), static_cast<Eigen::Index>(section.parameters.size())));
  return model;
}

}  // namespace oeflow
