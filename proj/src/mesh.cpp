#include "heatcorr/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>

#include "heatcorr/error.hpp"

namespace heatcorr {
namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& msg) {
  throw Error(ErrorCategory::parse,
              path.string() + ":" + std::to_string(line) + ": " + msg);
}

[[noreturn]] void validation_fail(const std::filesystem::path& path, int line,
                                  const std::string& msg) {
  throw Error(ErrorCategory::validation,
              path.string() + ":" + std::to_string(line) + ": " + msg);
}

/// Line reader that skips blank lines and '#' comments and tracks line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  bool next(std::string& out) {
    while (std::getline(is_, out)) {
      ++line_;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      auto first = out.find_first_not_of(" \t");
      if (first == std::string::npos || out[first] == '#') continue;
      return true;
    }
    return false;
  }

  int line() const { return line_; }

 private:
  std::istream& is_;
  int line_ = 0;
};

struct RawFace {
  std::vector<long long> idx;
  int line;
};

TriMesh assemble(const std::filesystem::path& path, std::vector<Vec3> verts,
                 const std::vector<RawFace>& raw) {
  const auto nv = static_cast<long long>(verts.size());
  std::vector<std::array<int, 3>> tris;
  tris.reserve(raw.size());
  for (const auto& f : raw) {
    if (f.idx.size() < 3) validation_fail(path, f.line, "face with fewer than 3 vertices");
    for (long long i : f.idx) {
      if (i < 0 || i >= nv) {
        validation_fail(path, f.line, "face index " + std::to_string(i) + " out of range [0, " +
                                          std::to_string(nv) + ")");
      }
    }
    for (std::size_t a = 0; a < f.idx.size(); ++a) {
      for (std::size_t b = a + 1; b < f.idx.size(); ++b) {
        if (f.idx[a] == f.idx[b]) {
          validation_fail(path, f.line,
                          "degenerate face: repeated vertex index " + std::to_string(f.idx[a]));
        }
      }
    }
    // Polygons are fan-triangulated.
    for (std::size_t k = 1; k + 1 < f.idx.size(); ++k) {
      tris.push_back({static_cast<int>(f.idx[0]), static_cast<int>(f.idx[k]),
                      static_cast<int>(f.idx[k + 1])});
    }
  }

  TriMesh mesh;
  mesh.vertices.resize(nv, 3);
  for (Index i = 0; i < nv; ++i) mesh.vertices.row(i) = verts[static_cast<std::size_t>(i)];
  mesh.faces.resize(static_cast<Index>(tris.size()), 3);
  for (Index f = 0; f < mesh.faces.rows(); ++f) {
    for (int c = 0; c < 3; ++c) mesh.faces(f, c) = tris[static_cast<std::size_t>(f)][c];
  }
  if (nv < 3) throw Error(ErrorCategory::validation, path.string() + ": fewer than 3 vertices");
  if (tris.empty()) throw Error(ErrorCategory::validation, path.string() + ": no faces");
  return mesh;
}

TriMesh parse_off(std::istream& is, const std::filesystem::path& path) {
  LineReader reader(is);
  std::string line;
  if (!reader.next(line)) parse_fail(path, reader.line(), "empty file");

  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") parse_fail(path, reader.line(), "expected OFF header, got '" + magic + "'");

  long long nv = -1, nf = -1, ne = 0;
  // Counts may share the header line.
  if (!(header >> nv >> nf)) {
    if (!reader.next(line)) parse_fail(path, reader.line(), "missing counts line");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf)) parse_fail(path, reader.line(), "malformed counts line");
    counts >> ne;
  }
  if (nv < 0 || nf < 0) parse_fail(path, reader.line(), "negative element count");

  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!reader.next(line)) parse_fail(path, reader.line(), "unexpected end of file in vertex list");
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) parse_fail(path, reader.line(), "malformed vertex line");
    if (!p.allFinite()) validation_fail(path, reader.line(), "non-finite vertex coordinate");
    verts.push_back(p);
  }

  std::vector<RawFace> raw;
  raw.reserve(static_cast<std::size_t>(nf));
  for (long long i = 0; i < nf; ++i) {
    if (!reader.next(line)) parse_fail(path, reader.line(), "unexpected end of file in face list");
    std::istringstream ls(line);
    long long n = 0;
    if (!(ls >> n) || n < 1) parse_fail(path, reader.line(), "malformed face line");
    RawFace f{{}, reader.line()};
    f.idx.resize(static_cast<std::size_t>(n));
    for (auto& v : f.idx) {
      if (!(ls >> v)) parse_fail(path, reader.line(), "face line shorter than its vertex count");
    }
    raw.push_back(std::move(f));
  }
  return assemble(path, std::move(verts), raw);
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  long long count = 0;
  std::vector<PlyProperty> props;
};

TriMesh parse_ply(std::istream& is, const std::filesystem::path& path) {
  LineReader reader(is);
  std::string line;
  if (!reader.next(line) || line.rfind("ply", 0) != 0) parse_fail(path, reader.line(), "expected ply header");

  std::vector<PlyElement> elements;
  bool ascii = false;
  while (true) {
    if (!reader.next(line)) parse_fail(path, reader.line(), "unterminated PLY header");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") {
        parse_fail(path, reader.line(), "binary PLY (" + fmt + ") is not supported; convert to ASCII PLY or OFF");
      }
      ascii = true;
    } else if (kw == "element") {
      PlyElement el;
      if (!(ls >> el.name >> el.count) || el.count < 0) parse_fail(path, reader.line(), "malformed element line");
      elements.push_back(std::move(el));
    } else if (kw == "property") {
      if (elements.empty()) parse_fail(path, reader.line(), "property before any element");
      std::string type;
      ls >> type;
      PlyProperty prop;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type;
        prop.is_list = true;
      }
      if (!(ls >> prop.name)) parse_fail(path, reader.line(), "malformed property line");
      elements.back().props.push_back(std::move(prop));
    } else if (kw == "comment" || kw == "obj_info") {
      continue;
    } else {
      parse_fail(path, reader.line(), "unknown PLY header keyword '" + kw + "'");
    }
  }
  if (!ascii) parse_fail(path, reader.line(), "missing format line");

  std::vector<Vec3> verts;
  std::vector<RawFace> raw;
  bool saw_vertex = false, saw_face = false;

  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1, ilist = -1;
    for (int p = 0; p < static_cast<int>(el.props.size()); ++p) {
      const auto& pr = el.props[static_cast<std::size_t>(p)];
      if (pr.name == "x") ix = p;
      if (pr.name == "y") iy = p;
      if (pr.name == "z") iz = p;
      if (pr.is_list && (pr.name == "vertex_indices" || pr.name == "vertex_index")) ilist = p;
    }
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex) {
      saw_vertex = true;
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(path, reader.line(), "vertex element lacks x/y/z");
    }
    if (is_face) {
      saw_face = true;
      if (ilist < 0) parse_fail(path, reader.line(), "face element lacks a vertex_indices list");
    }

    for (long long r = 0; r < el.count; ++r) {
      if (!reader.next(line)) parse_fail(path, reader.line(), "unexpected end of file in element '" + el.name + "'");
      std::istringstream ls(line);
      Vec3 p = Vec3::Zero();
      RawFace f{{}, reader.line()};
      for (int pi = 0; pi < static_cast<int>(el.props.size()); ++pi) {
        const auto& pr = el.props[static_cast<std::size_t>(pi)];
        if (pr.is_list) {
          long long n = 0;
          if (!(ls >> n) || n < 0) parse_fail(path, reader.line(), "malformed list count");
          for (long long k = 0; k < n; ++k) {
            double v = 0;
            if (!(ls >> v)) parse_fail(path, reader.line(), "list shorter than its count");
            if (is_face && pi == ilist) f.idx.push_back(static_cast<long long>(v));
          }
        } else {
          double v = 0;
          if (!(ls >> v)) parse_fail(path, reader.line(), "missing property value");
          if (is_vertex) {
            if (pi == ix) p.x() = v;
            if (pi == iy) p.y() = v;
            if (pi == iz) p.z() = v;
          }
        }
      }
      if (is_vertex) {
        if (!p.allFinite()) validation_fail(path, reader.line(), "non-finite vertex coordinate");
        verts.push_back(p);
      }
      if (is_face) raw.push_back(std::move(f));
    }
  }
  if (!saw_vertex || !saw_face) parse_fail(path, reader.line(), "PLY needs both vertex and face elements");
  return assemble(path, std::move(verts), raw);
}

void write_coord(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void validate(const TriMesh& mesh) {
  const Index nv = mesh.n_vertices();
  if (nv < 3) throw Error(ErrorCategory::validation, "mesh has fewer than 3 vertices");
  if (mesh.n_faces() < 1) throw Error(ErrorCategory::validation, "mesh has no faces");
  if (!mesh.vertices.allFinite()) throw Error(ErrorCategory::validation, "non-finite vertex coordinate");
  for (Index f = 0; f < mesh.n_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int i = mesh.faces(f, c);
      if (i < 0 || i >= nv) {
        throw Error(ErrorCategory::validation,
                    "face " + std::to_string(f) + " index " + std::to_string(i) + " out of range");
      }
    }
    if (mesh.faces(f, 0) == mesh.faces(f, 1) || mesh.faces(f, 1) == mesh.faces(f, 2) ||
        mesh.faces(f, 0) == mesh.faces(f, 2)) {
      throw Error(ErrorCategory::validation, "face " + std::to_string(f) + " is degenerate");
    }
  }
}

TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::io, "cannot open mesh file " + path.string());
  return format == MeshFormat::off ? parse_off(is, path) : parse_ply(is, path);
}

namespace {
MeshFormat format_from_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".off") return MeshFormat::off;
  if (ext == ".ply") return MeshFormat::ply;
  throw Error(ErrorCategory::usage, "unsupported mesh extension '" + ext + "' (expected .off or .ply)");
}
}  // namespace

TriMesh load_mesh(const std::filesystem::path& path) {
  return load_mesh(path, format_from_extension(path));
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCategory::io, "cannot write mesh file " + path.string());
  if (format == MeshFormat::off) {
    os << "OFF\n" << mesh.n_vertices() << ' ' << mesh.n_faces() << " 0\n";
  } else {
    os << "ply\nformat ascii 1.0\nelement vertex " << mesh.n_vertices()
       << "\nproperty double x\nproperty double y\nproperty double z\nelement face "
       << mesh.n_faces() << "\nproperty list uchar int vertex_indices\nend_header\n";
  }
  for (Index i = 0; i < mesh.n_vertices(); ++i) {
    write_coord(os, mesh.vertices(i, 0));
    os << ' ';
    write_coord(os, mesh.vertices(i, 1));
    os << ' ';
    write_coord(os, mesh.vertices(i, 2));
    os << '\n';
  }
  for (Index f = 0; f < mesh.n_faces(); ++f) {
    os << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
  }
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  save_mesh(mesh, path, format_from_extension(path));
}

MeshMetrics compute_metrics(const TriMesh& mesh) {
  MeshMetrics m;
  const Index nf = mesh.n_faces();
  m.face_areas.resize(nf);
  m.vertex_normals = Positions::Zero(mesh.n_vertices(), 3);

  std::unordered_map<std::uint64_t, int> edge_count;
  edge_count.reserve(static_cast<std::size_t>(3 * nf));
  for (Index f = 0; f < nf; ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
    const Vec3 n = (b - a).cross(c - a);  // |n| = 2 * area
    m.face_areas(f) = 0.5 * n.norm();
    for (int k = 0; k < 3; ++k) {
      m.vertex_normals.row(mesh.faces(f, k)) += n.transpose();
      auto i = static_cast<std::uint64_t>(mesh.faces(f, k));
      auto j = static_cast<std::uint64_t>(mesh.faces(f, (k + 1) % 3));
      if (i > j) std::swap(i, j);
      ++edge_count[(i << 32) | j];
    }
  }
  m.total_area = m.face_areas.sum();
  for (Index v = 0; v < mesh.n_vertices(); ++v) {
    const double len = m.vertex_normals.row(v).norm();
    if (len > 0) m.vertex_normals.row(v) /= len;
  }
  m.is_closed = std::all_of(edge_count.begin(), edge_count.end(),
                            [](const auto& kv) { return kv.second == 2; });
  return m;
}

TriMesh normalize_to_unit_area(const TriMesh& mesh) {
  const double area = compute_metrics(mesh).total_area;
  if (!(area > 0.0) || !std::isfinite(area)) {
    throw Error(ErrorCategory::validation, "cannot normalize a mesh with zero total area");
  }
  const double s = 1.0 / std::sqrt(area);
  const Eigen::RowVector3d centroid = mesh.vertices.colwise().mean();
  TriMesh out = mesh;
  out.vertices = ((mesh.vertices.rowwise() - centroid) * s).rowwise() + centroid;
  return out;
}

TriMesh permute_vertices(const TriMesh& mesh, const std::vector<int>& perm) {
  const Index n = mesh.n_vertices();
  if (static_cast<Index>(perm.size()) != n) {
    throw Error(ErrorCategory::validation, "permutation size does not match vertex count");
  }
  std::vector<int> inverse(static_cast<std::size_t>(n), -1);
  TriMesh out;
  out.vertices.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    const int old = perm[static_cast<std::size_t>(i)];
    out.vertices.row(i) = mesh.vertices.row(old);
    inverse[static_cast<std::size_t>(old)] = static_cast<int>(i);
  }
  out.faces.resize(mesh.n_faces(), 3);
  for (Index f = 0; f < mesh.n_faces(); ++f) {
    for (int c = 0; c < 3; ++c) out.faces(f, c) = inverse[static_cast<std::size_t>(mesh.faces(f, c))];
  }
  return out;
}

std::vector<Index> connected_components(const TriMesh& mesh) {
  const auto n = static_cast<std::size_t>(mesh.n_vertices());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& p = parent[static_cast<std::size_t>(x)];
      p = parent[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  };
  for (Index f = 0; f < mesh.n_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int a = find(mesh.faces(f, c));
      const int b = find(mesh.faces(f, (c + 1) % 3));
      if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
  }
  std::map<int, Index> sizes;
  for (std::size_t v = 0; v < n; ++v) ++sizes[find(static_cast<int>(v))];
  std::vector<Index> out;
  for (const auto& [root, size] : sizes) out.push_back(size);
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace heatcorr
