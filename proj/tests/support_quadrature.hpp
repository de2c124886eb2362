#pragma once

#include <algorithm>
#include <cmath>

#include "oeflow/flow.hpp"

namespace testing {

struct Box {
  double lo[2];
  double hi[2];
};

/// Bounding box of the preimage of the latent square [-r, r]^2: the map is a
/// continuous bijection, so the preimage of the square's boundary encloses it.
inline Box latent_square_preimage(const oeflow::FlowModel& model, double r, int per_side = 4000) {
  oeflow::Matrix z(2, 4 * per_side);
  for (int i = 0; i < per_side; ++i) {
    const double t = -r + 2.0 * r * i / per_side;
    z.col(4 * i) << t, -r;
    z.col(4 * i + 1) << r, t;
    z.col(4 * i + 2) << -t, r;
    z.col(4 * i + 3) << -r, -t;
  }
  const oeflow::Matrix x = oeflow::flow_inverse(model, z);
  Box box{};
  for (int k = 0; k < 2; ++k) {
    box.lo[k] = x.row(k).minCoeff();
    box.hi[k] = x.row(k).maxCoeff();
  }
  return box;
}

namespace detail {

inline double midpoint_cell(const oeflow::FlowModel& model, double x0, double y0, double w, double h, int k) {
  oeflow::Matrix pts(2, k * k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) pts.col(j * k + i) << x0 + (i + 0.5) * w / k, y0 + (j + 0.5) * h / k;
  }
  return (-oeflow::nll(model, pts)).array().exp().sum() * w * h / (k * k);
}

inline double adaptive_cell(const oeflow::FlowModel& model, double x0, double y0, double w, double h,
                            double tolerance, int depth) {
  const double coarse = midpoint_cell(model, x0, y0, w, h, 4);
  const double fine = midpoint_cell(model, x0, y0, w, h, 8);
  if (std::abs(fine - coarse) <= tolerance || depth == 0) return fine;
  double total = 0.0;
  for (int q = 0; q < 4; ++q) {
    total += adaptive_cell(model, x0 + (q % 2) * w / 2, y0 + (q / 2) * h / 2, w / 2, h / 2, tolerance / 4,
                           depth - 1);
  }
  return total;
}

}  // namespace detail

/// Adaptive cubature of exp(-nll) over the box: a tiles x tiles grid whose
/// cells are split into quadrants until the 4x4 and 8x8 midpoint rules agree.
/// Resolves the thin ridges of strongly stretching flows that a uniform grid misses.
inline double integrate_density_adaptive(const oeflow::FlowModel& model, const Box& box, int tiles = 32,
                                         double tolerance = 1e-3, int max_depth = 24) {
  const double w = (box.hi[0] - box.lo[0]) / tiles;
  const double h = (box.hi[1] - box.lo[1]) / tiles;
  const double cell_tolerance = tolerance / (tiles * tiles);
  double total = 0.0;
  for (int j = 0; j < tiles; ++j) {
    for (int i = 0; i < tiles; ++i) {
      total += detail::adaptive_cell(model, box.lo[0] + i * w, box.lo[1] + j * h, w, h, cell_tolerance, max_depth);
    }
  }
  return total;
}

}  // namespace testing
