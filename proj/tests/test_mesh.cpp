#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "heatcorr/mesh.hpp"
#include "heatcorr/primitives.hpp"
#include "support.hpp"

using namespace heatcorr;
using heatcorr::testing::TempDir;
using heatcorr::testing::write_text;

namespace {

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

double cross_area_sum(const TriMesh& m) {
  double s = 0.0;
  for (Index f = 0; f < m.n_faces(); ++f) {
    const Vec3 a = m.vertices.row(m.faces(f, 0)).transpose();
    const Vec3 b = m.vertices.row(m.faces(f, 1)).transpose();
    const Vec3 c = m.vertices.row(m.faces(f, 2)).transpose();
    s += (b - a).cross(c - a).norm() / 2.0;
  }
  return s;
}

}  // namespace

TEST_CASE("load a minimal OFF triangle") {
  TempDir dir("mesh");
  write_text(dir / "tri.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const TriMesh m = load_mesh(dir / "tri.off");
  CHECK(m.n_vertices() == 3);
  CHECK(m.n_faces() == 1);
  CHECK(m.vertices(1, 0) == 1.0);
  CHECK(m.faces(0, 2) == 2);
  CHECK(compute_metrics(m).face_areas(0) == 0.5);
  CHECK_FALSE(compute_metrics(m).is_closed);
}

TEST_CASE("OFF errors carry line numbers") {
  TempDir dir("mesh");
  write_text(dir / "degen.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 0 1\n");
  CHECK_THROWS_AS(load_mesh(dir / "degen.off"), Error);
  const std::string degen = error_message([&] { load_mesh(dir / "degen.off"); });
  CHECK(degen.find("degenerate") != std::string::npos);
  CHECK(degen.find(":6") != std::string::npos);

  write_text(dir / "range.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n");
  const std::string range = error_message([&] { load_mesh(dir / "range.off"); });
  CHECK(range.find("out of range") != std::string::npos);

  write_text(dir / "header.off", "OFX\n3 1 0\n");
  CHECK_THROWS_AS(load_mesh(dir / "header.off"), Error);
  write_text(dir / "counts.off", "OFF\nthree 1 0\n");
  CHECK_THROWS_AS(load_mesh(dir / "counts.off"), Error);
  write_text(dir / "short.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n");
  CHECK_THROWS_AS(load_mesh(dir / "short.off"), Error);
  CHECK_THROWS_AS(load_mesh(dir / "missing.off"), Error);
  CHECK_THROWS_AS(load_mesh(dir / "mesh.obj"), Error);
}

TEST_CASE("unit square area and quads") {
  TempDir dir("mesh");
  write_text(dir / "sq.off", "OFF\n# comment\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n");
  CHECK(compute_metrics(load_mesh(dir / "sq.off")).total_area == doctest::Approx(1.0).epsilon(1e-15));
  write_text(dir / "quad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  const TriMesh q = load_mesh(dir / "quad.off");
  CHECK(q.n_faces() == 2);
  CHECK(compute_metrics(q).total_area == doctest::Approx(1.0));
}

TEST_CASE("ASCII PLY with extra properties") {
  TempDir dir("mesh");
  write_text(dir / "t.ply",
             "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\n"
             "property float z\nproperty uchar red\nelement face 2\nproperty list uchar int vertex_indices\n"
             "property int flags\nend_header\n0 0 0 255\n1 0 0 0\n1 1 0 0\n0 1 0 9\n3 0 1 2 7\n3 0 2 3 8\n");
  const TriMesh m = load_mesh(dir / "t.ply");
  CHECK(m.n_vertices() == 4);
  CHECK(m.n_faces() == 2);
  CHECK(m.vertices(2, 1) == 1.0);
  CHECK(m.faces(1, 2) == 3);

  write_text(dir / "b.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 3\nend_header\n");
  const std::string msg = error_message([&] { load_mesh(dir / "b.ply"); });
  CHECK(msg.find("binary") != std::string::npos);
}

TEST_CASE("compute_metrics on closed and open meshes") {
  const auto tet = heatcorr::testing::tetrahedron();
  const MeshMetrics mm = compute_metrics(tet);
  CHECK(mm.is_closed);
  CHECK(mm.total_area == doctest::Approx(1.5 + std::sqrt(3.0) / 2.0));
  for (Index i = 0; i < 4; ++i) CHECK(mm.vertex_normals.row(i).norm() == doctest::Approx(1.0));
  CHECK_FALSE(compute_metrics(primitives::grid(3, 3)).is_closed);
  CHECK(compute_metrics(primitives::icosphere(2)).is_closed);
  CHECK(compute_metrics(primitives::torus(8, 12)).is_closed);

  // outward normals on a sphere
  const TriMesh s = primitives::icosphere(2);
  const MeshMetrics sm = compute_metrics(s);
  for (Index i = 0; i < s.n_vertices(); ++i) CHECK(sm.vertex_normals.row(i).dot(s.vertices.row(i)) > 0.9);
}

TEST_CASE("total area equals the cross-product sum on random meshes") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    TriMesh m = primitives::add_bumps(primitives::icosphere(trial % 3), 4, 0.2, 0.4, rng());
    CHECK(compute_metrics(m).total_area == doctest::Approx(cross_area_sum(m)).epsilon(1e-12));
  }
}

TEST_CASE("normalize_to_unit_area") {
  TriMesh sq = primitives::grid(2, 2);
  sq.vertices *= 2.0;  // area 4
  const TriMesh n = normalize_to_unit_area(sq);
  CHECK(compute_metrics(n).total_area == doctest::Approx(1.0).epsilon(1e-12));
  // edge lengths halve
  const double before = (sq.vertices.row(1) - sq.vertices.row(0)).norm();
  const double after = (n.vertices.row(1) - n.vertices.row(0)).norm();
  CHECK(after == doctest::Approx(0.5 * before).epsilon(1e-12));

  const TriMesh again = normalize_to_unit_area(n);
  CHECK((again.vertices - n.vertices).cwiseAbs().maxCoeff() < 1e-12);

  TriMesh flat = heatcorr::testing::make_mesh({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1, 2}});
  CHECK_THROWS_AS(normalize_to_unit_area(flat), Error);
}

TEST_CASE("normalize commutes with rigid motions") {
  std::mt19937_64 rng(17);
  const TriMesh base = primitives::add_bumps(primitives::icosphere(2), 6, 0.2, 0.4, 3);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Matrix3d r = heatcorr::testing::random_rotation(rng);
    const Eigen::RowVector3d t(1.5, -2.0, 0.25 * trial);
    TriMesh moved = base;
    moved.vertices = (base.vertices * r.transpose()).rowwise() + t;
    TriMesh expected = normalize_to_unit_area(base);
    expected.vertices = (expected.vertices * r.transpose()).rowwise() + t;
    const TriMesh got = normalize_to_unit_area(moved);
    CHECK((got.vertices - expected.vertices).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("save/load round trip is bit-exact") {
  TempDir dir("mesh");
  const TriMesh m = primitives::add_bumps(primitives::torus(9, 14), 5, 0.05, 0.3, 8);
  for (const char* name : {"r.off", "r.ply"}) {
    save_mesh(m, dir / name);
    const TriMesh back = load_mesh(dir / name);
    CHECK(back.vertices == m.vertices);
    CHECK(back.faces == m.faces);
  }
}

TEST_CASE("validate and permute") {
  TriMesh bad = heatcorr::testing::tetrahedron();
  bad.faces(2, 1) = 9;
  CHECK_THROWS_AS(validate(bad), Error);
  TriMesh two = heatcorr::testing::make_mesh({{0, 0, 0}, {1, 0, 0}}, {});
  CHECK_THROWS_AS(validate(two), Error);

  const TriMesh tet = heatcorr::testing::tetrahedron();
  const TriMesh p = permute_vertices(tet, {3, 1, 0, 2});
  CHECK(p.vertices.row(0) == tet.vertices.row(3));
  CHECK(compute_metrics(p).total_area == doctest::Approx(compute_metrics(tet).total_area));
  CHECK_THROWS_AS(permute_vertices(tet, {0, 1}), Error);
}

TEST_CASE("connected components") {
  TriMesh two = heatcorr::testing::make_mesh(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}, {6, 1, 0}},
      {{0, 1, 2}, {3, 4, 5}, {4, 6, 5}});
  const auto sizes = connected_components(two);
  REQUIRE(sizes.size() == 2);
  CHECK(sizes[0] == 4);
  CHECK(sizes[1] == 3);
  CHECK(connected_components(primitives::icosphere(1)).size() == 1);
}
