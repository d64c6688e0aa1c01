#pragma once

// Cotangent Laplace-Beltrami operator, its truncated generalized eigenbasis,
// and spectral heat kernels built from that basis.

#include <cstdint>
#include <filesystem>

#include <Eigen/Core>

#include "heatcorr/error.hpp"
#include "heatcorr/mesh.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

/// Cotangent stiffness (positive semi-definite, rows sum to zero) and
/// barycentric lumped mass diagonal.
struct LaplacianPair {
  SparseMatrix stiffness;
  Vector mass;
};

/// Smallest eigenpairs of L phi = lambda A phi, A-orthonormal, ascending.
struct SpectralBasis {
  Vector eigenvalues;
  Matrix eigenfunctions;  // N x E
  Vector mass;            // lumped mass diagonal, length N

  Index n_vertices() const { return eigenfunctions.rows(); }
  Index size() const { return eigenfunctions.cols(); }
};

struct HeatKernelMatrix {
  Matrix values;
  double time = 0.0;
  Index basis_size = 0;
};

/// Cotangents are clamped to this magnitude so near-degenerate triangles stay finite.
inline constexpr double kCotangentClamp = 1e4;
/// Above this vertex count eigendecompose switches from the dense solver to shift-invert Lanczos.
inline constexpr Index kDenseEigenLimit = 2000;

LaplacianPair build_laplacian(const TriMesh& mesh);

enum class EigenSolverKind { automatic, dense, shift_invert };

/// E algebraically smallest eigenpairs. Each column's largest-magnitude entry is made positive.
SpectralBasis eigendecompose(const LaplacianPair& lap, Index basis_size,
                             EigenSolverKind kind = EigenSolverKind::automatic);

/// Per-column residual ||L phi - lambda A phi|| / ||phi||.
Vector eigen_residuals(const LaplacianPair& lap, const SpectralBasis& basis);

/// Phi * diag(exp(-lambda t)) * Phi^T, symmetric bit for bit.
template <typename DerivedPhi, typename DerivedLambda>
MatrixX<typename DerivedPhi::Scalar> heat_kernel_values(const Eigen::MatrixBase<DerivedPhi>& phi,
                                                         const Eigen::MatrixBase<DerivedLambda>& lambda,
                                                         typename DerivedPhi::Scalar t) {
  using Scalar = typename DerivedPhi::Scalar;
  const Index n = phi.rows();
  const MatrixX<Scalar> scaled =
      phi * (-lambda.array() * t).exp().sqrt().matrix().asDiagonal();
  MatrixX<Scalar> k = MatrixX<Scalar>::Zero(n, n);
  k.template selfadjointView<Eigen::Lower>().rankUpdate(scaled);
  k.template triangularView<Eigen::StrictlyUpper>() = k.transpose();
  return k;
}

HeatKernelMatrix heat_kernel(const SpectralBasis& basis, double t);

/// Rows `rows` of the heat kernel only (|rows| x N).
Matrix heat_kernel_rows(const SpectralBasis& basis, double t, const std::vector<Index>& rows);

/// Mean coefficient of variation (std / mean) over the given kernel rows.
double mean_row_variation(const SpectralBasis& basis, double t, const std::vector<Index>& rows);

enum class TimeTarget { coarse, fine };

struct VariationBand {
  double lo;
  double hi;
};

VariationBand band_for(TimeTarget target);

/// Bisection in log t over [1e-6, 1e3] for a time whose mean row
/// coefficient of variation falls inside the target band.
double select_time(const SpectralBasis& basis, Index sample_count, TimeTarget target,
                   std::uint64_t seed = 0);

// SPEC1 cache file.
void save_spectral_cache(const SpectralBasis& basis, ContentHash mesh_hash,
                         const std::filesystem::path& path);

struct SpectralCache {
  SpectralBasis basis;
  ContentHash mesh_hash = 0;
};

SpectralCache load_spectral_cache(const std::filesystem::path& path);

}  // namespace heatcorr
