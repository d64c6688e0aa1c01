#pragma once

// Siamese residual MLP on point descriptors, spectral projection, functional
// map solve, soft correspondence and the unsupervised distortion loss, with
// hand-written gradients and an Adam optimizer.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "heatcorr/descriptor.hpp"
#include "heatcorr/error.hpp"
#include "heatcorr/mesh.hpp"
#include "heatcorr/spectral.hpp"
#include "heatcorr/supervisor.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

/// x <- x + W2 * elu(W1 * x + b1) + b2, applied to every row.
struct ResidualBlock {
  Matrix w1, w2;  // D x D
  Vector b1, b2;  // D
};

struct NetworkParams {
  std::vector<ResidualBlock> blocks;
  std::uint64_t seed = 0;

  Index dim() const { return blocks.empty() ? 0 : blocks.front().w1.rows(); }
  Index layer_count() const { return static_cast<Index>(blocks.size()); }

  /// Same shapes, all zeros.
  NetworkParams zeros_like() const;
  /// Mutable flat views of every tensor, in checkpoint order (w1, b1, w2, b2 per block).
  std::vector<Eigen::Map<Vector>> tensors();
  std::vector<Eigen::Map<const Vector>> tensors() const;
  Index parameter_count() const;
};

struct AdamState {
  NetworkParams first_moment;
  NetworkParams second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(const NetworkParams& params, double learning_rate = 1e-3);
};

enum class ShapeRole { source, target };

struct ShapeBundle {
  TriMesh mesh;
  SpectralBasis basis;
  DescriptorMatrix descriptors;
  SupervisorKernel supervisor;  // may stay empty when kernels are passed to forward_pair directly
  ShapeRole role = ShapeRole::source;

  Index n_vertices() const { return basis.n_vertices(); }
  /// Throws unless every per-vertex array (and the supervisor, if set) agrees on N.
  void check_consistent() const;
};

/// Functional map C, soft map Q (N_target x N_source, column-stochastic) and P with Q = P o P.
struct SoftCorrespondence {
  Matrix fmap;
  Matrix soft_map;
  Matrix pre_square;
  Index zero_columns = 0;
};

struct LossConfig {
  double ridge = 1e-6;
};

/// Weights ~ N(0, 2/D), biases zero.
NetworkParams init_params(Index dim, int layer_count, std::uint64_t seed);

template <typename Derived>
auto elu(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : std::expm1(v); });
}

Matrix forward_features(const NetworkParams& params, const Matrix& descriptors);

/// Spectral coefficients Phi^T A X (E x D).
template <typename Derived>
Matrix project(const Eigen::MatrixBase<Derived>& features, const SpectralBasis& basis) {
  if (features.rows() != basis.n_vertices()) {
    throw Error(ErrorCategory::validation, "feature rows do not match basis vertex count");
  }
  return basis.eigenfunctions.transpose() * (basis.mass.asDiagonal() * features);
}

/// Ridge least squares for C in G = C F: C = G F^T (F F^T + ridge I)^{-1}.
Matrix solve_fmap(const Matrix& source_coeffs, const Matrix& target_coeffs, double ridge);

/// Psi C Phi^T A, column-normalized magnitudes, squared. Restricting to vertex
/// subsets uses only the chosen rows of each basis.
SoftCorrespondence soft_map(const Matrix& fmap, const SpectralBasis& source_basis, const SpectralBasis& target_basis);
SoftCorrespondence soft_map(const Matrix& fmap, const SpectralBasis& source_basis, const SpectralBasis& target_basis,
                            const std::vector<Index>& source_subset, const std::vector<Index>& target_subset);

/// (1 / N_s^2) ||K_s - Q^T K_t Q||_F^2
template <typename DQ, typename DS, typename DT>
double distortion_loss(const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DS>& k_source,
                       const Eigen::MatrixBase<DT>& k_target) {
  if (q.rows() != k_target.rows() || q.cols() != k_source.rows() || k_source.rows() != k_source.cols() ||
      k_target.rows() != k_target.cols()) {
    throw Error(ErrorCategory::validation, "distortion_loss: inconsistent shapes");
  }
  const double n = static_cast<double>(q.cols());
  const Matrix kq = k_target * q;
  return (k_source - q.transpose() * kq).squaredNorm() / (n * n);
}

/// Every intermediate of one source/target forward pass, kept for backward().
struct PairForward {
  // per shape: inputs of each block, pre-activations of each block, final features
  std::vector<Matrix> src_inputs, src_pre, tgt_inputs, tgt_pre;
  Matrix src_features, tgt_features;
  Matrix f, g;         // E x D coefficients
  Matrix h_inv;        // (F F^T + ridge I)^{-1}
  Matrix c;            // E x E
  Matrix psi_sub;      // target eigenfunction rows in the subset
  Matrix proj_sub;     // Phi^T A restricted to source subset columns
  Matrix raw;          // Psi C Phi^T A on the subsets
  Vector col_sq_norm;  // squared column norms of raw
  Matrix q;
  Matrix kq;           // K_t Q
  Matrix residual;     // K_s - Q^T K_t Q
  const SpectralBasis* src_basis = nullptr;
  const SpectralBasis* tgt_basis = nullptr;
  double loss = 0.0;
  bool shared_features = false;  // source and target are the same bundle; tgt_inputs/tgt_pre stay empty
};

/// Full-vertex forward pass.
PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const LossConfig& config);
/// Loss restricted to vertex subsets of each shape (normalized by the subset size).
PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const LossConfig& config, const std::vector<Index>& source_subset,
                         const std::vector<Index>& target_subset);

/// Same as above with the supervisor kernels supplied separately (full N x N
/// matrices, restricted to the subsets internally).
PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const Matrix& source_kernel, const Matrix& target_kernel, const LossConfig& config,
                         const std::vector<Index>& source_subset, const std::vector<Index>& target_subset);

/// Gradient of the loss in `fwd` with respect to every parameter.
NetworkParams backward(const NetworkParams& params, const PairForward& fwd);

/// In-place a += b over all tensors.
void accumulate(NetworkParams& into, const NetworkParams& grads);

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state);

// PRMS1 checkpoint.
void save_checkpoint(const NetworkParams& params, const AdamState& state, const std::filesystem::path& path);

struct Checkpoint {
  NetworkParams params;
  AdamState state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace heatcorr
