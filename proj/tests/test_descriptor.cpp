#include <cmath>
#include <random>

#include "doctest.h"
#include "heatcorr/descriptor.hpp"
#include "heatcorr/primitives.hpp"
#include "support.hpp"

using namespace heatcorr;
using heatcorr::testing::TempDir;

namespace {

void check_row_norms(const DescriptorMatrix& d) {
  for (Index i = 0; i < d.rows(); ++i) {
    const double n = d.values.row(i).norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) <= 1e-6));
  }
  CHECK(d.values.allFinite());
}

}  // namespace

TEST_CASE("SHOT dimension and padding") {
  CHECK(shot_dimension(10) == 352);
  CHECK(shot_dimension(4) == 128);
  const TriMesh m = normalize_to_unit_area(primitives::icosphere(3));
  const DescriptorMatrix d = compute_shot(m, ShotConfig{});
  CHECK(d.dim() == 352);
  CHECK(d.rows() == m.n_vertices());
  CHECK(d.values.rightCols(32).isZero(0.0));
  CHECK(d.kind == DescriptorKind::shot);
  check_row_norms(d);
  CHECK(d.empty_neighborhoods == 0);
  CHECK(compute_shot(m, ShotConfig{4, 0.1}).dim() == 128);
}

TEST_CASE("SHOT parameter validation") {
  const TriMesh m = normalize_to_unit_area(primitives::icosphere(1));
  CHECK_THROWS_AS(compute_shot(m, ShotConfig{1, 0.05}), Error);
  CHECK_THROWS_AS(compute_shot(m, ShotConfig{10, 0.0}), Error);
  CHECK_THROWS_AS(compute_shot(m, ShotConfig{10, 1.0}), Error);
  CHECK(ShotConfig{10, 0.05}.hash() != ShotConfig{10, 0.06}.hash());
  CHECK(ShotConfig{10, 0.05}.hash() == ShotConfig{10, 0.05}.hash());
}

TEST_CASE("single triangle with covering radius has unit rows") {
  const TriMesh tri = heatcorr::testing::make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const DescriptorMatrix d = compute_shot_with_radius(tri, 10, 2.0);
  for (Index i = 0; i < 3; ++i) CHECK(d.values.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tiny radius leaves empty neighborhoods as zero rows") {
  const TriMesh m = normalize_to_unit_area(primitives::icosphere(2));
  const DescriptorMatrix d = compute_shot(m, ShotConfig{10, 1e-4});
  CHECK(d.empty_neighborhoods == m.n_vertices());
  CHECK(d.values.isZero(0.0));
  check_row_norms(d);
}

TEST_CASE("rigid rotation leaves descriptors unchanged") {
  std::mt19937_64 rng(12);
  const TriMesh m = normalize_to_unit_area(primitives::bumpy_torus(1000, 5));
  const DescriptorMatrix ref = compute_shot(m, ShotConfig{});
  for (int trial = 0; trial < 3; ++trial) {
    TriMesh moved = m;
    moved.vertices = (m.vertices * heatcorr::testing::random_rotation(rng).transpose()).rowwise() +
                     Eigen::RowVector3d(0.2, 0.1, -0.7);
    const DescriptorMatrix d = compute_shot(moved, ShotConfig{});
    CHECK((d.values - ref.values).cwiseAbs().maxCoeff() <= 1e-3);
  }
}

TEST_CASE("permutation equivariance and determinism") {
  std::mt19937_64 rng(4);
  const TriMesh m = normalize_to_unit_area(primitives::add_bumps(primitives::icosphere(3), 6, 0.1, 0.4, 2));
  const DescriptorMatrix ref = compute_shot(m, ShotConfig{});
  CHECK(compute_shot(m, ShotConfig{}, 1).values == ref.values);
  CHECK(compute_shot(m, ShotConfig{}, 3).values == ref.values);
  const auto perm = heatcorr::testing::random_permutation(static_cast<int>(m.n_vertices()), rng);
  const DescriptorMatrix p = compute_shot(permute_vertices(m, perm), ShotConfig{});
  for (Index i = 0; i < m.n_vertices(); ++i) {
    CHECK(p.values.row(i) == ref.values.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("local frame is orthonormal and right-handed") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts;
    for (int k = 0; k < 30; ++k) pts.emplace_back(n(rng), n(rng), 0.2 * n(rng));
    const Eigen::Matrix3d f = shot_local_frame(Vec3::Zero(), pts, 10.0);
    CHECK((f.transpose() * f - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(f.determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("DESC1 round trip and truncation") {
  TempDir dir("desc");
  const TriMesh m = normalize_to_unit_area(primitives::icosphere(2));
  const DescriptorMatrix d = compute_shot(m, ShotConfig{});
  save_descriptors(d, 1234, dir / "d.desc");
  const DescriptorFile back = load_descriptors(dir / "d.desc");
  CHECK(back.mesh_hash == 1234);
  CHECK(back.descriptors.values == d.values);
  CHECK(back.descriptors.kind == DescriptorKind::shot);

  // header claims 10 rows, only 9 present
  DescriptorMatrix ten;
  ten.values = Matrix::Zero(10, 4);
  save_descriptors(ten, 1, dir / "ten.desc");
  std::string bytes = heatcorr::testing::read_text(dir / "ten.desc");
  const std::size_t header = 5 + 8 + 8 + 1;
  bytes = bytes.substr(0, header + 9 * 4 * sizeof(float));
  heatcorr::testing::write_text(dir / "nine.desc", bytes);
  CHECK_THROWS_AS(load_descriptors(dir / "nine.desc"), Error);
}

TEST_CASE("external descriptors are accepted and tagged") {
  TempDir dir("desc");
  std::mt19937_64 rng(1);
  DescriptorMatrix ext;
  ext.values = heatcorr::testing::random_matrix(42, 352, rng).cast<float>().cast<double>();
  ext.kind = DescriptorKind::external;
  save_descriptors(ext, 5, dir / "e.desc");
  const DescriptorFile back = load_descriptors(dir / "e.desc");
  CHECK(back.descriptors.kind == DescriptorKind::external);
  CHECK(back.descriptors.values == ext.values);

  std::string text;
  for (Index i = 0; i < 3; ++i) text += "0.5 0.25 -1\n";
  heatcorr::testing::write_text(dir / "e.txt", text);
  const DescriptorMatrix t = load_descriptors_text(dir / "e.txt");
  CHECK(t.kind == DescriptorKind::external);
  CHECK(t.rows() == 3);
  CHECK(t.dim() == 3);
  heatcorr::testing::write_text(dir / "ragged.txt", "1 2 3\n1 2\n");
  CHECK_THROWS_AS(load_descriptors_text(dir / "ragged.txt"), Error);
}
