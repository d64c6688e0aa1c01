#pragma once

#include <filesystem>
#include <vector>

#include "heatcorr/types.hpp"

namespace heatcorr {

/// Triangle mesh. Vertex order is whatever the source file declared.
struct TriMesh {
  Positions vertices;
  Faces faces;

  Index n_vertices() const { return vertices.rows(); }
  Index n_faces() const { return faces.rows(); }
};

struct MeshMetrics {
  Vector face_areas;
  double total_area = 0.0;
  /// Unit area-weighted normals; zero rows for vertices without incident area.
  Positions vertex_normals;
  bool is_closed = false;
};

enum class MeshFormat { off, ply };

/// Checks index range, repeated indices and the minimum size. Throws validation errors.
void validate(const TriMesh& mesh);

TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// Format chosen by extension (.off / .ply).
TriMesh load_mesh(const std::filesystem::path& path);

/// Writes with 17 significant digits so a reload is bit-exact.
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);

MeshMetrics compute_metrics(const TriMesh& mesh);

inline double face_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Uniform scaling about the vertex centroid to total area 1.
TriMesh normalize_to_unit_area(const TriMesh& mesh);

/// Returns the mesh with vertices reordered so that new vertex i is old vertex perm[i].
TriMesh permute_vertices(const TriMesh& mesh, const std::vector<int>& perm);

/// Sizes of the connected components of the vertex graph, largest first.
std::vector<Index> connected_components(const TriMesh& mesh);

}  // namespace heatcorr
