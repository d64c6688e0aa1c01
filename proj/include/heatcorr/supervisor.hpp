#pragma once

#include "heatcorr/types.hpp"

namespace heatcorr {

enum class SupervisorKind { heat, geodesic };

/// Pairwise training signal: a heat kernel K_t or a geodesic distance matrix.
struct SupervisorKernel {
  Matrix matrix;
  SupervisorKind kind = SupervisorKind::heat;
  double time = 0.0;  // diffusion time, heat only

  /// Geodesic matrices are symmetrized; heat kernels are symmetric by construction.
  static SupervisorKernel heat(Matrix k, double t) { return {std::move(k), SupervisorKind::heat, t}; }
  static SupervisorKernel geodesic(const Matrix& d) {
    return {Matrix(0.5 * (d + d.transpose())), SupervisorKind::geodesic, 0.0};
  }
};

}  // namespace heatcorr
