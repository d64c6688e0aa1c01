#include <chrono>
#include <numeric>
#include <random>

#include "doctest.h"
#include "heatcorr/curriculum.hpp"
#include "heatcorr/geodesic.hpp"
#include "heatcorr/primitives.hpp"
#include "support.hpp"

using namespace heatcorr;

namespace {

ShapeBundle bundle_for(const TriMesh& raw, Index e, Index d, std::uint64_t seed) {
  ShapeBundle b;
  b.mesh = normalize_to_unit_area(raw);
  b.basis = eigendecompose(build_laplacian(b.mesh), e);
  std::mt19937_64 rng(seed);
  b.descriptors.values = heatcorr::testing::random_matrix(b.mesh.n_vertices(), d, rng).cwiseAbs();
  b.descriptors.values.rowwise().normalize();
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("stage lookup for a two-stage decay") {
  const Schedule s = Schedule::decayed({{0, 0.1}, {5000, 0.01}}, 10000);
  CHECK(s.stages[s.stage_at(0)].time == 0.1);
  CHECK(s.stages[s.stage_at(4999)].time == 0.1);
  CHECK(s.stages[s.stage_at(5000)].time == 0.01);
  CHECK(s.stages[s.stage_at(9999)].time == 0.01);
  CHECK_THROWS_AS(s.stage_at(10000), Error);
  CHECK_THROWS_AS(s.stage_at(-1), Error);
  CHECK(s.initial_time() == 0.1);

  const Schedule partial = Schedule::decayed({{0, 1.0}, {500, 0.1}}, 1000);
  CHECK(partial.stages[partial.stage_at(600)].time == 0.1);
  CHECK(partial.stages[partial.stage_at(499)].time == 1.0);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(Schedule::decayed({{0, 0.1}, {500, 0.2}}, 1000), Error);   // increasing time
  CHECK_THROWS_AS(Schedule::decayed({{10, 0.1}}, 1000), Error);              // first stage not at 0
  CHECK_THROWS_AS(Schedule::decayed({{0, 0.1}, {0, 0.01}}, 1000), Error);    // repeated start
  CHECK_THROWS_AS(Schedule::decayed({{0, 0.1}, {1000, 0.01}}, 1000), Error); // starts past the end
  CHECK_THROWS_AS(Schedule::fixed(0.0, 10), Error);
  CHECK_THROWS_AS(Schedule::fixed(1.0, 0), Error);
  CHECK_THROWS_AS(Schedule::decayed({}, 10), Error);
  CHECK_NOTHROW(Schedule::geodesic(10));
  CHECK(parse_schedule_kind("decayed_heat") == ScheduleKind::decayed_heat);
  CHECK(to_string(ScheduleKind::fixed_heat) == "fixed_heat");
  CHECK_THROWS_AS(parse_schedule_kind("heat"), Error);
}

TEST_CASE("kernel_at follows the schedule") {
  const ShapeBundle b = bundle_for(primitives::icosphere(2), 30, 8, 1);
  const Schedule s = Schedule::decayed({{0, 0.1}, {5000, 0.01}}, 10000);
  const SupervisorKernel k0 = kernel_at(s, 4999, b);
  const SupervisorKernel k1 = kernel_at(s, 5000, b);
  CHECK(k0.kind == SupervisorKind::heat);
  CHECK(k0.time == 0.1);
  CHECK(k1.time == 0.01);
  CHECK(k0.matrix == heat_kernel(b.basis, 0.1).values);
  CHECK(k1.matrix == heat_kernel(b.basis, 0.01).values);

  const Schedule fixed = Schedule::fixed(0.05, 100);
  const Matrix first = kernel_at(fixed, 0, b).matrix;
  for (std::int64_t it : {1, 50, 99}) CHECK(kernel_at(fixed, it, b).matrix == first);

  ShapeBundle g = b;
  CHECK_THROWS_AS(kernel_at(Schedule::geodesic(10), 0, g), Error);
  g.supervisor = SupervisorKernel::geodesic(all_pairs_geodesic(g.mesh).values);
  CHECK(kernel_at(Schedule::geodesic(10), 3, g).matrix == g.supervisor.matrix);
}

TEST_CASE("kernel cache computes each stage once") {
  const ShapeBundle a = bundle_for(primitives::icosphere(2), 20, 8, 1);
  const ShapeBundle b = bundle_for(primitives::torus(8, 14), 20, 8, 2);
  KernelCache cache(Schedule::decayed({{0, 0.1}, {50, 0.05}, {80, 0.01}}, 100));
  for (std::int64_t it = 0; it < 100; ++it) {
    cache.kernel_at(it, 0, a);
    cache.kernel_at(it, 1, b);
  }
  CHECK(cache.kernels_computed() == 6);
  CHECK(cache.kernel_at(99, 0, a) == heat_kernel(a.basis, 0.01).values);
  // stage 0 stays available for validation
  cache.initial_kernel(0, a);
  CHECK(cache.kernels_computed() == 6);
  CHECK(cache.initial_kernel(1, b) == heat_kernel(b.basis, 0.1).values);
}

TEST_CASE("validation loss uses the initial time") {
  std::vector<ShapeBundle> shapes = {bundle_for(primitives::add_bumps(primitives::icosphere(1), 4, 0.1, 0.5, 1), 12, 16, 1),
                                     bundle_for(primitives::add_bumps(primitives::icosphere(1), 4, 0.1, 0.5, 2), 12, 16, 2)};
  const NetworkParams p = init_params(16, 2, 5);
  const LossConfig cfg;
  KernelCache cache(Schedule::decayed({{0, 0.1}, {5000, 0.01}}, 10000));
  cache.kernel_at(9000, 0, shapes[0]);  // advance into the second stage

  const double single = validation_loss(p, {{0, 1}}, shapes, cache, cfg);
  ShapeBundle s0 = shapes[0], s1 = shapes[1];
  s0.supervisor = SupervisorKernel::heat(heat_kernel(s0.basis, 0.1).values, 0.1);
  s1.supervisor = SupervisorKernel::heat(heat_kernel(s1.basis, 0.1).values, 0.1);
  CHECK(single == doctest::Approx(forward_pair(p, s0, s1, cfg).loss).epsilon(1e-14));

  CHECK(validation_loss(p, {{0, 1}, {0, 1}}, shapes, cache, cfg) == doctest::Approx(single).epsilon(1e-15));
  const double mixed = validation_loss(p, {{0, 1}, {1, 1}}, shapes, cache, cfg);
  const double self = validation_loss(p, {{1, 1}}, shapes, cache, cfg);
  CHECK(mixed == doctest::Approx(0.5 * (single + self)));
  CHECK_THROWS_AS(validation_loss(p, {}, shapes, cache, cfg), Error);
  CHECK_THROWS_AS(validation_loss(p, {{0, 5}}, shapes, cache, cfg), Error);
}

TEST_CASE("decayed stages get strictly more local") {
  const ShapeBundle b = bundle_for(primitives::bumpy_torus(800, 2), 60, 4, 1);
  const Schedule s = Schedule::decayed({{0, 0.2}, {10, 0.05}, {20, 0.01}, {30, 0.003}}, 40);
  std::vector<Index> rows(40);
  std::iota(rows.begin(), rows.end(), Index{0});
  for (auto& r : rows) r *= 17;
  double prev = 0.0;
  for (const auto& st : s.stages) {
    const double cv = mean_row_variation(b.basis, st.time, rows);
    CHECK(cv > prev);
    prev = cv;
  }
}

TEST_CASE("stage change costs a small fraction of one all-pairs geodesic run") {
  const ShapeBundle b = bundle_for(primitives::bumpy_torus(1000, 3), 60, 4, 1);
  KernelCache cache(Schedule::decayed({{0, 0.1}, {1, 0.01}}, 2));
  cache.kernel_at(0, 0, b);
  const auto t0 = std::chrono::steady_clock::now();
  cache.kernel_at(1, 0, b);
  const double change = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  all_pairs_geodesic(b.mesh, 1);
  const double geo = seconds_since(t1);
  MESSAGE("stage change " << change << " s, all-pairs geodesic " << geo << " s");
  CHECK(change < 0.05 * geo);
}
