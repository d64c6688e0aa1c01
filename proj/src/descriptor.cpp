#include "heatcorr/descriptor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "heatcorr/binary_io.hpp"
#include "heatcorr/error.hpp"
#include "heatcorr/hash.hpp"
#include "heatcorr/log.hpp"
#include "heatcorr/parallel.hpp"

namespace heatcorr {
namespace {

constexpr int kAzimuthBins = 8;

/// Uniform grid over the vertex positions with cell size equal to the query radius.
class RadiusGrid {
 public:
  RadiusGrid(const Positions& points, double radius) : points_(points), cell_(radius) {
    for (Index i = 0; i < points.rows(); ++i) cells_[key(cell_of(points.row(i)))].push_back(static_cast<int>(i));
  }

  /// Indices within `radius` of `center`, excluding `self`, sorted by
  /// (distance, x, y, z) so accumulation order does not depend on vertex numbering.
  std::vector<int> query(Index self, double radius) const {
    const Vec3 c = points_.row(self);
    const auto base = cell_of(c);
    std::vector<int> out;
    const double r2 = radius * radius;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({base[0] + dx, base[1] + dy, base[2] + dz}));
          if (it == cells_.end()) continue;
          for (int j : it->second) {
            if (j == self) continue;
            if ((Vec3(points_.row(j)) - c).squaredNorm() <= r2) out.push_back(j);
          }
        }
      }
    }
    std::sort(out.begin(), out.end(), [&](int a, int b) {
      const double da = (Vec3(points_.row(a)) - c).squaredNorm();
      const double db = (Vec3(points_.row(b)) - c).squaredNorm();
      if (da != db) return da < db;
      for (int k = 0; k < 3; ++k) {
        if (points_(a, k) != points_(b, k)) return points_(a, k) < points_(b, k);
      }
      return a < b;
    });
    return out;
  }

 private:
  std::array<long long, 3> cell_of(const Vec3& p) const {
    return {static_cast<long long>(std::floor(p.x() / cell_)), static_cast<long long>(std::floor(p.y() / cell_)),
            static_cast<long long>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const std::array<long long, 3>& c) {
    std::uint64_t h = 0;
    for (long long v : c) h = mix_seed(h ^ static_cast<std::uint64_t>(v));
    return h;
  }

  const Positions& points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

// Majority of neighbours on the positive side wins; ties fall back to the
// distance-weighted projection sum, then to global +z, +x, +y.
void disambiguate(Vec3& axis, const Vec3& center, const std::vector<Vec3>& neighbors, double radius) {
  int pos = 0, neg = 0;
  double weighted = 0.0;
  for (const auto& q : neighbors) {
    const Vec3 d = q - center;
    const double proj = d.dot(axis);
    (proj >= 0 ? pos : neg) += 1;
    weighted += (radius - d.norm()) * proj;
  }
  bool flip = false;
  if (pos != neg) {
    flip = neg > pos;
  } else if (weighted != 0.0) {
    flip = weighted < 0.0;
  } else if (axis.z() != 0.0) {
    flip = axis.z() < 0.0;
  } else if (axis.x() != 0.0) {
    flip = axis.x() < 0.0;
  } else {
    flip = axis.y() < 0.0;
  }
  if (flip) axis = -axis;
}

struct Interp {
  int lo;
  int hi;
  double w_hi;  // weight of `hi`; `lo` gets 1 - w_hi
};

// Linear interpolation between integer-centred bins on a bounded axis.
Interp clamp_interp(double coord, int bins) {
  coord = std::clamp(coord, 0.0, static_cast<double>(bins - 1));
  const int lo = std::min(static_cast<int>(std::floor(coord)), bins - 1);
  const int hi = std::min(lo + 1, bins - 1);
  return {lo, hi, coord - lo};
}

// Cyclic axis (azimuth).
Interp wrap_interp(double coord, int bins) {
  const double f = std::floor(coord);
  int lo = static_cast<int>(f) % bins;
  if (lo < 0) lo += bins;
  return {lo, (lo + 1) % bins, coord - f};
}

void shot_row(const Positions& points, const Positions& normals, const RadiusGrid& grid, Index v, int bins,
              double radius, Eigen::Ref<Vector> out, Index& empty) {
  const Vec3 center = points.row(v);
  const std::vector<int> nn = grid.query(v, radius);
  if (nn.empty()) {
    ++empty;
    return;
  }
  std::vector<Vec3> pts;
  pts.reserve(nn.size());
  for (int j : nn) pts.emplace_back(points.row(j));
  const Eigen::Matrix3d frame = shot_local_frame(center, pts, radius);

  const double half_pi = std::numbers::pi / 2.0;
  const double sector_span = 2.0 * std::numbers::pi / kAzimuthBins;
  for (std::size_t k = 0; k < nn.size(); ++k) {
    const Vec3 d = pts[k] - center;
    const double dist = d.norm();
    if (dist == 0.0) continue;
    const Vec3 local = frame * d;
    const double cos_normal = std::clamp(Vec3(normals.row(nn[k])).dot(frame.row(2)), -1.0, 1.0);

    const Interp cosb = clamp_interp((1.0 + cos_normal) * 0.5 * bins - 0.5, bins);
    const Interp azim = wrap_interp((std::atan2(local.y(), local.x()) + std::numbers::pi) / sector_span - 0.5,
                                    kAzimuthBins);
    const Interp elev = clamp_interp(std::acos(std::clamp(local.z() / dist, -1.0, 1.0)) / half_pi - 0.5, 2);
    const Interp rad = clamp_interp(dist / (radius * 0.5) - 0.5, 2);

    for (int a = 0; a < 2; ++a) {
      const int ai = a ? azim.hi : azim.lo;
      const double wa = a ? azim.w_hi : 1.0 - azim.w_hi;
      for (int e = 0; e < 2; ++e) {
        const int ei = e ? elev.hi : elev.lo;
        const double we = wa * (e ? elev.w_hi : 1.0 - elev.w_hi);
        for (int r = 0; r < 2; ++r) {
          const int ri = r ? rad.hi : rad.lo;
          const double wr = we * (r ? rad.w_hi : 1.0 - rad.w_hi);
          const int sector = (ai * 2 + ei) * 2 + ri;
          out(sector * bins + cosb.lo) += wr * (1.0 - cosb.w_hi);
          out(sector * bins + cosb.hi) += wr * cosb.w_hi;
        }
      }
    }
  }
  const double norm = out.norm();
  if (norm > 0.0) {
    out /= norm;
  } else {
    ++empty;
  }
}

}  // namespace

ContentHash ShotConfig::hash() const {
  std::ostringstream s;
  s << "shot:bins=" << bins << ":radius_fraction=" << radius_fraction;
  return fnv1a(s.str());
}

Index shot_dimension(int bins) {
  const Index raw = static_cast<Index>(kShotSectors) * bins;
  return bins == 10 ? kShotPaddedDim : raw;
}

Eigen::Matrix3d shot_local_frame(const Vec3& center, const std::vector<Vec3>& neighbors, double radius) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double total = 0.0;
  for (const auto& q : neighbors) {
    const Vec3 d = q - center;
    const double w = radius - d.norm();
    cov += w * d * d.transpose();
    total += w;
  }
  if (total > 0.0) cov /= total;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Vec3 x = es.eigenvectors().col(2);
  Vec3 z = es.eigenvectors().col(0);
  disambiguate(x, center, neighbors, radius);
  disambiguate(z, center, neighbors, radius);
  const Vec3 y = z.cross(x);
  Eigen::Matrix3d frame;
  frame.row(0) = x.transpose();
  frame.row(1) = y.transpose();
  frame.row(2) = z.transpose();
  return frame;
}

DescriptorMatrix compute_shot_with_radius(const TriMesh& mesh, int bins, double radius, unsigned threads) {
  if (bins < 2) throw Error(ErrorCategory::usage, "SHOT needs at least 2 cosine bins");
  if (!(radius > 0.0)) throw Error(ErrorCategory::usage, "SHOT support radius must be positive");
  validate(mesh);
  const MeshMetrics metrics = compute_metrics(mesh);
  const Index n = mesh.n_vertices();
  const Index raw_dim = static_cast<Index>(kShotSectors) * bins;

  DescriptorMatrix desc;
  desc.values = Matrix::Zero(n, shot_dimension(bins));
  const RadiusGrid grid(mesh.vertices, radius);
  std::vector<Index> empty(static_cast<std::size_t>(n), 0);
  Matrix rows = Matrix::Zero(raw_dim, n);  // one column per vertex keeps writes disjoint
  parallel_for(n, threads, [&](Index v) {
    shot_row(mesh.vertices, metrics.vertex_normals, grid, v, bins, radius, rows.col(v),
             empty[static_cast<std::size_t>(v)]);
  });
  desc.values.leftCols(raw_dim) = rows.transpose().cast<float>().cast<double>();
  for (Index e : empty) desc.empty_neighborhoods += e;
  if (desc.empty_neighborhoods > 0) {
    log::warn(std::to_string(desc.empty_neighborhoods) + " vertices have an empty SHOT neighbourhood");
  }
  return desc;
}

DescriptorMatrix compute_shot(const TriMesh& mesh, const ShotConfig& config, unsigned threads) {
  if (!(config.radius_fraction > 0.0 && config.radius_fraction < 1.0)) {
    throw Error(ErrorCategory::usage, "SHOT radius fraction must lie in (0, 1)");
  }
  const double area = compute_metrics(mesh).total_area;
  DescriptorMatrix desc = compute_shot_with_radius(mesh, config.bins, config.radius_fraction * std::sqrt(area), threads);
  desc.config_hash = config.hash();
  return desc;
}

void save_descriptors(const DescriptorMatrix& desc, ContentHash mesh_hash, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  binio::write_magic(os, "DESC1");
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(desc.rows()));
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(desc.dim()));
  binio::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(desc.kind));
  const RowMatrixX<float> values = desc.values.cast<float>();
  binio::write_array(os, values.data(), static_cast<std::size_t>(values.size()));
  binio::write_pod<std::uint64_t>(os, mesh_hash);
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

DescriptorFile load_descriptors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string());
  binio::expect_magic(is, "DESC1");
  const auto n = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "N"));
  const auto d = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "D"));
  const auto kind = binio::read_pod<std::uint8_t>(is, "kind");
  if (kind > 1) throw Error(ErrorCategory::parse, path.string() + ": unknown descriptor kind byte");
  if (n < 1 || d < 1 || n * d > (Index{1} << 31)) {
    throw Error(ErrorCategory::parse, path.string() + ": implausible descriptor dimensions");
  }
  RowMatrixX<float> values(n, d);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  const auto got = static_cast<Index>(is.gcount()) / static_cast<Index>(sizeof(float));
  if (got != n * d) {
    throw Error(ErrorCategory::parse, path.string() + ": header declares " + std::to_string(n) + " x " +
                                          std::to_string(d) + " values but only " + std::to_string(got / d) +
                                          " complete rows are present");
  }
  DescriptorFile out;
  out.descriptors.values = values.cast<double>();
  out.descriptors.kind = static_cast<DescriptorKind>(kind);
  out.mesh_hash = binio::read_pod<std::uint64_t>(is, "mesh hash");
  if (!out.descriptors.values.allFinite()) {
    throw Error(ErrorCategory::validation, path.string() + ": non-finite descriptor entries");
  }
  return out;
}

DescriptorMatrix load_descriptors_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<double> row;
    double v = 0;
    while (ls >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCategory::parse, path.string() + ":" + std::to_string(lineno) + ": row has " +
                                            std::to_string(row.size()) + " values, expected " +
                                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCategory::parse, path.string() + ": no descriptor rows");
  DescriptorMatrix desc;
  desc.kind = DescriptorKind::external;
  desc.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      desc.values(static_cast<Index>(r), static_cast<Index>(c)) = static_cast<float>(rows[r][c]);
    }
  }
  if (!desc.values.allFinite()) throw Error(ErrorCategory::validation, path.string() + ": non-finite entries");
  return desc;
}

}  // namespace heatcorr
