#pragma once

// Graph approximation of geodesic distances: Dijkstra over mesh edges plus,
// for every interior edge, the diagonal joining the two opposite vertices,
// weighted by its length in the unfolded triangle pair. The diagonal is only
// added when it stays inside the unfolded quad, so every graph path is
// realizable on the surface and distances never undercut true geodesics.

#include <filesystem>
#include <vector>

#include "heatcorr/mesh.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

struct GeodesicMatrix {
  Matrix values;
  ContentHash source_mesh_hash = 0;
};

/// Weighted adjacency in compressed row form.
struct DistanceGraph {
  std::vector<Index> offsets;  // size N + 1
  std::vector<int> targets;
  std::vector<double> weights;

  Index n_vertices() const { return static_cast<Index>(offsets.size()) - 1; }
};

DistanceGraph build_distance_graph(const TriMesh& mesh);

/// Single-source distances over the graph.
Vector dijkstra(const DistanceGraph& graph, Index source);

GeodesicMatrix all_pairs_geodesic(const TriMesh& mesh, unsigned threads = 0);

/// Rows of all_pairs_geodesic for the given sources (|sources| x N).
Matrix geodesic_rows(const TriMesh& mesh, const std::vector<Index>& sources, unsigned threads = 0);

// GEOD1 cache file; values are stored as float32.
void save_geodesic_cache(const GeodesicMatrix& geo, const std::filesystem::path& path);
GeodesicMatrix load_geodesic_cache(const std::filesystem::path& path);

}  // namespace heatcorr
