#include "heatcorr/primitives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "heatcorr/error.hpp"

namespace heatcorr::primitives {

TriMesh icosphere(int level) {
  if (level < 0) throw Error(ErrorCategory::usage, "icosphere level must be >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]);
      const int b = mid(tri[1], tri[2]);
      const int c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = v[i];
  mesh.faces.resize(static_cast<Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (int c = 0; c < 3; ++c) mesh.faces(static_cast<Index>(i), c) = f[i][static_cast<std::size_t>(c)];
  }
  return mesh;
}

TriMesh torus(int rings, int segments, double major_radius, double minor_radius) {
  if (rings < 3 || segments < 3) throw Error(ErrorCategory::usage, "torus needs at least 3x3 vertices");
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(rings) * segments, 3);
  mesh.faces.resize(2 * static_cast<Index>(rings) * segments, 3);
  const double two_pi = 2.0 * std::numbers::pi;
  auto id = [&](int i, int j) { return (i % rings) * segments + (j % segments); };
  for (int i = 0; i < rings; ++i) {
    const double u = two_pi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double w = two_pi * j / segments;
      const double r = major_radius + minor_radius * std::cos(w);
      mesh.vertices.row(id(i, j)) << r * std::cos(u), r * std::sin(u), minor_radius * std::sin(w);
    }
  }
  Index f = 0;
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      mesh.faces.row(f++) << a, b, c;
      mesh.faces.row(f++) << a, c, d;
    }
  }
  return mesh;
}

TriMesh grid(int nx, int ny) {
  if (nx < 2 || ny < 2) throw Error(ErrorCategory::usage, "grid needs at least 2x2 vertices");
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(nx) * ny, 3);
  mesh.faces.resize(2 * static_cast<Index>(nx - 1) * (ny - 1), 3);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.vertices.row(j * nx + i) << static_cast<double>(i) / (nx - 1), static_cast<double>(j) / (ny - 1), 0.0;
    }
  }
  Index f = 0;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i, b = a + 1, c = a + nx + 1, d = a + nx;
      mesh.faces.row(f++) << a, b, c;
      mesh.faces.row(f++) << a, c, d;
    }
  }
  return mesh;
}

TriMesh add_bumps(const TriMesh& mesh, int bumps, double amplitude, double width, std::uint64_t seed) {
  const MeshMetrics metrics = compute_metrics(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, mesh.n_vertices() - 1);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  Vector offset = Vector::Zero(mesh.n_vertices());
  for (int b = 0; b < bumps; ++b) {
    const Vec3 center = mesh.vertices.row(pick(rng));
    const double amp = amplitude * sign(rng);
    for (Index v = 0; v < mesh.n_vertices(); ++v) {
      const double d2 = (Vec3(mesh.vertices.row(v)) - center).squaredNorm();
      offset(v) += amp * std::exp(-d2 / (2.0 * width * width));
    }
  }
  TriMesh out = mesh;
  for (Index v = 0; v < mesh.n_vertices(); ++v) {
    out.vertices.row(v) += offset(v) * metrics.vertex_normals.row(v);
  }
  return out;
}

TriMesh bumpy_torus(int target_vertices, std::uint64_t seed) {
  // Aspect 5:2 between the long and short circles keeps triangles near equilateral.
  const int segments = std::max(3, static_cast<int>(std::lround(std::sqrt(target_vertices * 0.4))));
  const int rings = std::max(3, static_cast<int>(std::lround(static_cast<double>(target_vertices) / segments)));
  return add_bumps(torus(rings, segments, 1.0, 0.4), 12, 0.08, 0.25, seed);
}

}  // namespace heatcorr::primitives
