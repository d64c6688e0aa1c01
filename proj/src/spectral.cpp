#include "heatcorr/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "heatcorr/binary_io.hpp"
#include "heatcorr/log.hpp"

namespace heatcorr {
namespace {

double clamped_cot(const Vec3& a, const Vec3& b) {
  const double cross = a.cross(b).norm();
  const double dot = a.dot(b);
  if (cross == 0.0) {
    if (dot == 0.0) return 0.0;
    return dot > 0 ? kCotangentClamp : -kCotangentClamp;
  }
  return std::clamp(dot / cross, -kCotangentClamp, kCotangentClamp);
}

void fix_signs(Matrix& phi) {
  for (Index c = 0; c < phi.cols(); ++c) {
    Index arg = 0;
    phi.col(c).cwiseAbs().maxCoeff(&arg);
    if (phi(arg, c) < 0) phi.col(c) *= -1.0;
  }
}

SpectralBasis dense_eigs(const LaplacianPair& lap, Index e) {
  const Vector inv_sqrt_mass = lap.mass.cwiseSqrt().cwiseInverse();
  const Matrix dense = Matrix(lap.stiffness);
  const Matrix sym = inv_sqrt_mass.asDiagonal() * dense * inv_sqrt_mass.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCategory::numeric, "dense symmetric eigensolver failed to converge");
  }
  SpectralBasis basis;
  basis.eigenvalues = solver.eigenvalues().head(e).cwiseMax(0.0);
  basis.eigenfunctions = inv_sqrt_mass.asDiagonal() * solver.eigenvectors().leftCols(e);
  basis.mass = lap.mass;
  return basis;
}

// Lanczos on (L - sigma A)^{-1} A in the A-inner product, full reorthogonalization,
// Krylov space grown without restarts until the wanted Ritz pairs converge.
SpectralBasis shift_invert_eigs(const LaplacianPair& lap, Index e) {
  const Index n = lap.mass.size();
  const Vector& mass = lap.mass;
  const double scale = lap.stiffness.diagonal().sum() / mass.sum();
  const double sigma = -1e-8 * scale;

  SparseMatrix shifted = lap.stiffness;
  for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= sigma * mass(i);
  Eigen::SimplicialLDLT<SparseMatrix> factor(shifted);
  if (factor.info() != Eigen::Success) {
    throw Error(ErrorCategory::numeric, "sparse factorization of the shifted Laplacian failed");
  }

  const Index cap = std::min(n, 50 * e);
  Index target = std::min(cap, 2 * e + 40);
  const double tol = 1e-11;

  Matrix q(n, std::min(cap + 1, n));
  Vector alpha(cap), beta(cap);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  auto random_start = [&](Index j) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal(rng);
    for (int pass = 0; pass < 2 && j > 0; ++pass) {
      v -= q.leftCols(j) * (q.leftCols(j).transpose() * mass.cwiseProduct(v));
    }
    return Vector(v / std::sqrt(v.dot(mass.cwiseProduct(v))));
  };
  q.col(0) = random_start(0);

  Index steps = 0;
  Eigen::SelfAdjointEigenSolver<Matrix> tri;
  double worst = std::numeric_limits<double>::infinity();
  while (true) {
    for (; steps < target; ++steps) {
      Vector w = factor.solve(mass.cwiseProduct(q.col(steps)));
      alpha(steps) = w.dot(mass.cwiseProduct(q.col(steps)));
      const Index j = steps + 1;
      for (int pass = 0; pass < 2; ++pass) {
        w -= q.leftCols(j) * (q.leftCols(j).transpose() * mass.cwiseProduct(w));
      }
      const double b = std::sqrt(std::max(0.0, w.dot(mass.cwiseProduct(w))));
      beta(steps) = b;
      if (j >= q.cols()) {
        steps = j;
        break;
      }
      if (b <= 1e-14 * std::abs(alpha(steps))) {
        // Invariant subspace found; continue from a fresh orthogonal direction.
        beta(steps) = 0.0;
        q.col(j) = random_start(j);
      } else {
        q.col(j) = w / b;
      }
    }
    const Index m = steps;
    Matrix t = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      t(i, i) = alpha(i);
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta(i);
    }
    tri.compute(t);
    // Largest Ritz values of the inverted operator are the smallest eigenvalues.
    worst = 0.0;
    for (Index k = 0; k < e; ++k) {
      const Index col = m - 1 - k;
      const double theta = tri.eigenvalues()(col);
      const double est = std::abs(beta(m - 1) * tri.eigenvectors()(m - 1, col));
      worst = std::max(worst, est / std::abs(theta));
    }
    if (worst <= tol || m >= cap) break;
    target = std::min(cap, m + e / 2 + 20);
  }
  if (worst > tol && steps < n) {
    std::ostringstream msg;
    msg << "shift-invert Lanczos did not converge after " << steps
        << " iterations (worst relative Ritz residual " << worst << ")";
    throw Error(ErrorCategory::numeric, msg.str());
  }

  const Index m = steps;
  SpectralBasis basis;
  basis.eigenvalues.resize(e);
  basis.eigenfunctions.resize(n, e);
  for (Index k = 0; k < e; ++k) {
    const Index col = m - 1 - k;
    basis.eigenvalues(k) = std::max(0.0, sigma + 1.0 / tri.eigenvalues()(col));
    basis.eigenfunctions.col(k) = q.leftCols(m) * tri.eigenvectors().col(col);
  }
  basis.mass = mass;
  return basis;
}

}  // namespace

LaplacianPair build_laplacian(const TriMesh& mesh) {
  validate(mesh);
  const Index n = mesh.n_vertices();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.n_faces()) * 12);
  Vector mass = Vector::Zero(n);

  for (Index f = 0; f < mesh.n_faces(); ++f) {
    const int idx[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    const Vec3 p[3] = {mesh.vertices.row(idx[0]), mesh.vertices.row(idx[1]), mesh.vertices.row(idx[2])};
    const double area = face_area(p[0], p[1], p[2]);
    for (int k = 0; k < 3; ++k) {
      mass(idx[k]) += area / 3.0;
      // Angle at corner k is opposite the edge (i, j).
      const int i = (k + 1) % 3, j = (k + 2) % 3;
      const double w = 0.5 * clamped_cot(p[i] - p[k], p[j] - p[k]);
      triplets.emplace_back(idx[i], idx[j], -w);
      triplets.emplace_back(idx[j], idx[i], -w);
      triplets.emplace_back(idx[i], idx[i], w);
      triplets.emplace_back(idx[j], idx[j], w);
    }
  }
  for (Index v = 0; v < n; ++v) {
    if (!(mass(v) > 0.0)) {
      throw Error(ErrorCategory::validation,
                  "vertex " + std::to_string(v) + " has zero incident area (isolated vertex)");
    }
  }

  LaplacianPair lap;
  lap.stiffness.resize(n, n);
  lap.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  lap.stiffness.makeCompressed();
  lap.mass = std::move(mass);
  return lap;
}

SpectralBasis eigendecompose(const LaplacianPair& lap, Index basis_size, EigenSolverKind kind) {
  const Index n = lap.mass.size();
  if (basis_size < 1 || basis_size > n) {
    throw Error(ErrorCategory::usage, "basis size " + std::to_string(basis_size) +
                                          " outside [1, " + std::to_string(n) + "]");
  }
  if (kind == EigenSolverKind::automatic) {
    kind = n <= kDenseEigenLimit ? EigenSolverKind::dense : EigenSolverKind::shift_invert;
  }
  SpectralBasis basis = kind == EigenSolverKind::dense ? dense_eigs(lap, basis_size)
                                                       : shift_invert_eigs(lap, basis_size);
  // Re-orthonormalize in the mass inner product.
  const Matrix gram = basis.eigenfunctions.transpose() * basis.mass.asDiagonal() * basis.eigenfunctions;
  const Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success) {
    basis.eigenfunctions = llt.matrixL().solve(basis.eigenfunctions.transpose()).transpose();
  }
  fix_signs(basis.eigenfunctions);

  if (!basis.eigenfunctions.allFinite() || !basis.eigenvalues.allFinite()) {
    throw Error(ErrorCategory::numeric, "eigendecomposition produced non-finite values");
  }
  if (basis_size > 1) {
    const double top = std::max(basis.eigenvalues(basis_size - 1), 1.0);
    Index zeros = 0;
    for (Index k = 0; k < basis_size; ++k) zeros += basis.eigenvalues(k) < 1e-9 * top ? 1 : 0;
    if (zeros > 1) {
      log::warn(std::to_string(zeros) + " near-zero eigenvalues: mesh is probably disconnected");
    }
  }
  return basis;
}

Vector eigen_residuals(const LaplacianPair& lap, const SpectralBasis& basis) {
  const Matrix lphi = lap.stiffness * basis.eigenfunctions;
  const Matrix aphi = basis.mass.asDiagonal() * basis.eigenfunctions;
  Vector res(basis.size());
  for (Index k = 0; k < basis.size(); ++k) {
    res(k) = (lphi.col(k) - basis.eigenvalues(k) * aphi.col(k)).norm() / basis.eigenfunctions.col(k).norm();
  }
  return res;
}

HeatKernelMatrix heat_kernel(const SpectralBasis& basis, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw Error(ErrorCategory::usage, "diffusion time must be positive and finite");
  }
  return {heat_kernel_values(basis.eigenfunctions, basis.eigenvalues, t), t, basis.size()};
}

Matrix heat_kernel_rows(const SpectralBasis& basis, double t, const std::vector<Index>& rows) {
  if (!(t > 0.0)) throw Error(ErrorCategory::usage, "diffusion time must be positive");
  const Vector decay = (-basis.eigenvalues.array() * t).exp();
  Matrix sel(static_cast<Index>(rows.size()), basis.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    sel.row(static_cast<Index>(r)) = basis.eigenfunctions.row(rows[r]).cwiseProduct(decay.transpose());
  }
  return sel * basis.eigenfunctions.transpose();
}

double mean_row_variation(const SpectralBasis& basis, double t, const std::vector<Index>& rows) {
  const Matrix k = heat_kernel_rows(basis, t, rows);
  double total = 0.0;
  for (Index r = 0; r < k.rows(); ++r) {
    const double mean = k.row(r).mean();
    if (!(mean > 0.0)) return std::numeric_limits<double>::infinity();
    const double var = (k.row(r).array() - mean).square().mean();
    total += std::sqrt(var) / mean;
  }
  return total / static_cast<double>(k.rows());
}

VariationBand band_for(TimeTarget target) {
  return target == TimeTarget::coarse ? VariationBand{0.5, 1.5} : VariationBand{3.0, 6.0};
}

double select_time(const SpectralBasis& basis, Index sample_count, TimeTarget target, std::uint64_t seed) {
  const Index n = basis.n_vertices();
  if (sample_count < 1 || sample_count > n) {
    throw Error(ErrorCategory::usage, "sample count " + std::to_string(sample_count) +
                                          " must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(sample_count));
  std::sort(all.begin(), all.end());

  const VariationBand band = band_for(target);
  double lo = 1e-6, hi = 1e3;  // CV decreases as t grows
  auto cv = [&](double t) { return mean_row_variation(basis, t, all); };
  const double cv_lo = cv(lo), cv_hi = cv(hi);
  auto fail = [&] {
    std::ostringstream msg;
    msg << "no diffusion time in [1e-6, 1e3] reaches row variation band [" << band.lo << ", "
        << band.hi << "] (variation spans " << cv_hi << " .. " << cv_lo
        << "); set the time manually";
    throw Error(ErrorCategory::numeric, msg.str());
  };
  if (cv_lo < band.lo || cv_hi > band.hi) fail();

  for (int iter = 0; iter < 200; ++iter) {
    const double mid = std::sqrt(lo * hi);
    const double v = cv(mid);
    if (v >= band.lo && v <= band.hi) return mid;
    if (v > band.hi) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fail();
  return std::sqrt(lo * hi);
}

void save_spectral_cache(const SpectralBasis& basis, ContentHash mesh_hash, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  binio::write_magic(os, "SPEC1");
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(basis.n_vertices()));
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(basis.size()));
  binio::write_array(os, basis.eigenvalues.data(), static_cast<std::size_t>(basis.size()));
  binio::write_array(os, basis.eigenfunctions.data(), static_cast<std::size_t>(basis.eigenfunctions.size()));
  binio::write_array(os, basis.mass.data(), static_cast<std::size_t>(basis.mass.size()));
  binio::write_pod<std::uint64_t>(os, mesh_hash);
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

SpectralCache load_spectral_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string());
  binio::expect_magic(is, "SPEC1");
  const auto n = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "N"));
  const auto e = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "E"));
  if (n < 1 || e < 1 || e > n || n > (Index{1} << 26)) {
    throw Error(ErrorCategory::parse, path.string() + ": implausible spectral cache dimensions");
  }
  SpectralCache out;
  out.basis.eigenvalues.resize(e);
  out.basis.eigenfunctions.resize(n, e);
  out.basis.mass.resize(n);
  binio::read_array(is, out.basis.eigenvalues.data(), static_cast<std::size_t>(e), "eigenvalues");
  binio::read_array(is, out.basis.eigenfunctions.data(), static_cast<std::size_t>(n * e), "eigenfunctions");
  binio::read_array(is, out.basis.mass.data(), static_cast<std::size_t>(n), "mass");
  out.mesh_hash = binio::read_pod<std::uint64_t>(is, "mesh hash");
  return out;
}

}  // namespace heatcorr
