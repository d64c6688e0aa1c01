#include "heatcorr/geodesic.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "heatcorr/binary_io.hpp"
#include "heatcorr/error.hpp"
#include "heatcorr/parallel.hpp"

namespace heatcorr {
namespace {

struct EdgeKey {
  int a, b;
  bool operator<(const EdgeKey& o) const { return a != o.a ? a < o.a : b < o.b; }
};

EdgeKey make_key(int i, int j) { return i < j ? EdgeKey{i, j} : EdgeKey{j, i}; }

// Length of the segment k-l after unfolding triangles (i,j,k) and (i,j,l) into
// a plane, or a negative value when the segment leaves the quad.
double unfolded_diagonal(const Vec3& vi, const Vec3& vj, const Vec3& vk, const Vec3& vl) {
  const Vec3 axis = vj - vi;
  const double len = axis.norm();
  if (len == 0.0) return -1.0;
  const Vec3 e = axis / len;
  const double xk = (vk - vi).dot(e);
  const double yk = ((vk - vi) - xk * e).norm();
  const double xl = (vl - vi).dot(e);
  const double yl = ((vl - vi) - xl * e).norm();
  if (yk + yl <= 0.0) return -1.0;
  const double cross_x = xk + (xl - xk) * yk / (yk + yl);
  if (cross_x < 0.0 || cross_x > len) return -1.0;
  return std::hypot(xk - xl, yk + yl);
}

void check_connected(const TriMesh& mesh) {
  const auto sizes = connected_components(mesh);
  if (sizes.size() > 1) {
    std::ostringstream msg;
    msg << "mesh is disconnected: " << sizes.size() << " components of sizes";
    for (std::size_t i = 0; i < sizes.size() && i < 10; ++i) msg << ' ' << sizes[i];
    if (sizes.size() > 10) msg << " ...";
    throw Error(ErrorCategory::validation, msg.str());
  }
}

}  // namespace

DistanceGraph build_distance_graph(const TriMesh& mesh) {
  validate(mesh);
  const Index n = mesh.n_vertices();
  std::map<EdgeKey, double> weight;
  std::map<EdgeKey, std::vector<int>> opposite;
  auto pos = [&](int v) -> Vec3 { return mesh.vertices.row(v); };
  auto relax = [&](int i, int j, double w) {
    auto [it, inserted] = weight.emplace(make_key(i, j), w);
    if (!inserted) it->second = std::min(it->second, w);
  };

  for (Index f = 0; f < mesh.n_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int i = mesh.faces(f, c), j = mesh.faces(f, (c + 1) % 3), k = mesh.faces(f, (c + 2) % 3);
      relax(i, j, (pos(i) - pos(j)).norm());
      opposite[make_key(i, j)].push_back(k);
    }
  }
  for (const auto& [edge, opp] : opposite) {
    // Only manifold interior edges have a well-defined unfolding.
    if (opp.size() != 2 || opp[0] == opp[1]) continue;
    const double d = unfolded_diagonal(pos(edge.a), pos(edge.b), pos(opp[0]), pos(opp[1]));
    if (d >= 0.0) relax(opp[0], opp[1], d);
  }

  DistanceGraph g;
  std::vector<Index> degree(static_cast<std::size_t>(n), 0);
  for (const auto& [edge, w] : weight) {
    ++degree[static_cast<std::size_t>(edge.a)];
    ++degree[static_cast<std::size_t>(edge.b)];
  }
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index v = 0; v < n; ++v) g.offsets[static_cast<std::size_t>(v) + 1] = g.offsets[static_cast<std::size_t>(v)] + degree[static_cast<std::size_t>(v)];
  g.targets.resize(static_cast<std::size_t>(g.offsets.back()));
  g.weights.resize(static_cast<std::size_t>(g.offsets.back()));
  std::vector<Index> fill(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [edge, w] : weight) {
    auto put = [&](int from, int to) {
      const auto slot = static_cast<std::size_t>(fill[static_cast<std::size_t>(from)]++);
      g.targets[slot] = to;
      g.weights[slot] = w;
    };
    put(edge.a, edge.b);
    put(edge.b, edge.a);
  }
  return g;
}

Vector dijkstra(const DistanceGraph& graph, Index source) {
  const Index n = graph.n_vertices();
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist(source) = 0.0;
  heap.emplace(0.0, static_cast<int>(source));
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist(v)) continue;
    const auto begin = static_cast<std::size_t>(graph.offsets[static_cast<std::size_t>(v)]);
    const auto end = static_cast<std::size_t>(graph.offsets[static_cast<std::size_t>(v) + 1]);
    for (std::size_t e = begin; e < end; ++e) {
      const int u = graph.targets[e];
      const double nd = d + graph.weights[e];
      if (nd < dist(u)) {
        dist(u) = nd;
        heap.emplace(nd, u);
      }
    }
  }
  return dist;
}

GeodesicMatrix all_pairs_geodesic(const TriMesh& mesh, unsigned threads) {
  check_connected(mesh);
  const DistanceGraph graph = build_distance_graph(mesh);
  const Index n = mesh.n_vertices();
  GeodesicMatrix out;
  out.values.resize(n, n);
  parallel_for(n, threads, [&](Index i) { out.values.row(i) = dijkstra(graph, i).transpose(); });
  return out;
}

Matrix geodesic_rows(const TriMesh& mesh, const std::vector<Index>& sources, unsigned threads) {
  const Index n = mesh.n_vertices();
  for (Index s : sources) {
    if (s < 0 || s >= n) {
      throw Error(ErrorCategory::validation, "source index " + std::to_string(s) + " out of range");
    }
  }
  Matrix rows(static_cast<Index>(sources.size()), n);
  if (sources.empty()) return rows;
  check_connected(mesh);
  const DistanceGraph graph = build_distance_graph(mesh);
  Matrix cols(n, static_cast<Index>(sources.size()));
  parallel_for(static_cast<Index>(sources.size()), threads,
               [&](Index r) { cols.col(r) = dijkstra(graph, sources[static_cast<std::size_t>(r)]); });
  rows = cols.transpose();
  return rows;
}

void save_geodesic_cache(const GeodesicMatrix& geo, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  const Index n = geo.values.rows();
  binio::write_magic(os, "GEOD1");
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(n));
  const RowMatrixX<float> rows = geo.values.cast<float>();
  binio::write_array(os, rows.data(), static_cast<std::size_t>(rows.size()));
  binio::write_pod<std::uint64_t>(os, geo.source_mesh_hash);
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

GeodesicMatrix load_geodesic_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string());
  binio::expect_magic(is, "GEOD1");
  const auto n = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "N"));
  if (n < 1 || n > (Index{1} << 17)) throw Error(ErrorCategory::parse, path.string() + ": implausible N");
  RowMatrixX<float> rows(n, n);
  binio::read_array(is, rows.data(), static_cast<std::size_t>(n * n), "distances");
  GeodesicMatrix out;
  out.values = rows.cast<double>();
  out.source_mesh_hash = binio::read_pod<std::uint64_t>(is, "mesh hash");
  return out;
}

}  // namespace heatcorr
