#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oeflow/flow.hpp"
#include "oeflow/numerics.hpp"
#include "oeflow/rng.hpp"

namespace testing {

using oeflow::Matrix;
using oeflow::Vector;

inline Vector random_vector(Eigen::Index n, oeflow::Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, oeflow::Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) m.col(j) = random_vector(rows, rng, scale);
  return m;
}

/// Replaces every parameter of the flow with scale * N(0, 1).
inline void randomize(oeflow::FlowModel& model, oeflow::Rng& rng, double scale) {
  model.set_parameters(random_vector(model.parameter_count(), rng, scale));
}

/// Alternating-mask flow with perturbed parameters. A single layer cannot
/// cover every coordinate, so the coverage check is dropped in that case.
inline oeflow::FlowModel random_flow(Eigen::Index d, int layers, Eigen::Index hidden, oeflow::Rng& rng,
                                     double scale = 0.1) {
  std::vector<oeflow::CouplingLayer> stack;
  for (int i = 0; i < layers; ++i) {
    stack.push_back(oeflow::CouplingLayer::make(oeflow::parity_mask(d, i % 2 == 0), hidden, 4.0, rng));
  }
  oeflow::FlowModel model(std::move(stack), layers >= 2);
  randomize(model, rng, scale);
  return model;
}

/// Jacobian of f at x by central differences.
template <typename F>
Matrix numeric_jacobian(F&& f, const Vector& x, double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector plus = x, minus = x;
    plus[j] += h;
    minus[j] -= h;
    jac.col(j) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return jac;
}

inline double log_abs_det(const Matrix& m) {
  const Eigen::PartialPivLU<Matrix> lu(m);
  return lu.matrixLU().diagonal().array().abs().log().sum();
}

/// n draws of N(mean, cov), one per column.
inline Matrix gaussian_samples(const Vector& mean, const Matrix& cov, Eigen::Index n, oeflow::Rng& rng) {
  const Matrix l = Eigen::LLT<Matrix>(cov).matrixL();
  Matrix x(mean.size(), n);
  for (Eigen::Index c = 0; c < n; ++c) x.col(c) = mean + l * random_vector(mean.size(), rng);
  return x;
}

/// Exact mean of -log N(x; mean, cov) over the columns of x.
inline double gaussian_mean_nll(const Vector& mean, const Matrix& cov, const Matrix& x) {
  const Eigen::LLT<Matrix> llt(cov);
  const double log_det = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  const double constant = 0.5 * (static_cast<double>(mean.size()) * std::log(2.0 * M_PI) + log_det);
  const Matrix centered = x.colwise() - mean;
  const Matrix white = llt.matrixL().solve(centered);
  return constant + 0.5 * white.colwise().squaredNorm().mean();
}

/// Pairwise AUC over all (anomaly, normal) pairs, ties counting one half.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<bool>& anomaly) {
  std::int64_t twice = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!anomaly[i]) continue;
    ++na;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (anomaly[j]) continue;
      twice += scores[i] > scores[j] ? 2 : (scores[i] == scores[j] ? 1 : 0);
    }
  }
  for (bool a : anomaly) nn += a ? 0 : 1;
  return static_cast<double>(twice) / static_cast<double>(2 * na * nn);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("oeflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
