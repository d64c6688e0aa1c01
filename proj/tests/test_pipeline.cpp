#include <functional>
#include <numeric>

#include "doctest.h"
#include "heatcorr/pipeline.hpp"
#include "heatcorr/primitives.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace heatcorr;
using heatcorr::testing::read_text;
using heatcorr::testing::TempDir;
using heatcorr::testing::write_text;
namespace fs = std::filesystem;

namespace {

// A small training setup: two bumpy tori and a shuffled copy of the first,
// with tiny descriptors so thousands of iterations stay fast.
struct Fixture {
  TempDir dir{"pipe"};

  Fixture() {
    save_mesh(primitives::bumpy_torus(120, 1), dir / "a.off");
    save_mesh(primitives::bumpy_torus(150, 2), dir / "b.off");
    const TriMesh a = load_mesh(dir / "a.off");
    std::mt19937_64 rng(4);
    const std::vector<int> perm = heatcorr::testing::random_permutation(static_cast<int>(a.n_vertices()), rng);
    save_mesh(permute_vertices(a, perm), dir / "a_shuffled.off");
    std::string gt(static_cast<std::size_t>(0), ' ');
    std::vector<int> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    for (int v : inverse) gt += std::to_string(v) + "\n";
    write_text(dir / "gt.txt", gt);
  }

  RunConfig config(std::vector<std::string> overrides = {}) const {
    std::vector<std::string> all = {"spectral.basis_size=12", "descriptor.bins=2", "network.layers=1",
                                    "schedule.total_iterations=20", "training.checkpoint_every=10",
                                    "training.validation_every=5"};
    all.insert(all.end(), overrides.begin(), overrides.end());
    return parse_config(R"([data]
train = ["a.off", "b.off"]
val = ["a_shuffled.off"]
test_pairs = [["a.off", "a_shuffled.off", "gt.txt"], ["a.off", "a.off", "identity"]]
)",
                        dir.path(), all);
  }
};

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    n += name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  }
  return n;
}

ErrorCategory category_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  FAIL("expected an error");
  return ErrorCategory::usage;
}

nlohmann::json manifest_of(const RunConfig& c) {
  return nlohmann::json::parse(read_text(c.output_dir / run_files::manifest));
}

}  // namespace

TEST_CASE("precompute is lazy about geodesics and idempotent") {
  Fixture f;
  const RunConfig c = f.config();
  const CacheReport first = precompute(c);
  CHECK(first.computed == 6);  // basis + descriptors for three meshes
  CHECK(count_files(c.cache_dir, ".geod") == 0);
  CHECK(count_files(c.cache_dir, ".spec") == 3);
  CHECK(count_files(c.cache_dir, ".lock") == 0);

  const CacheReport again = precompute(c);
  CHECK(again.recomputed() == 0);
  CHECK(again.reused > 0);

  const RunConfig g = f.config({"schedule.kind=geodesic"});
  const CacheReport geo = precompute(g);
  CHECK(geo.computed == 3);  // training and validation meshes only
  CHECK(count_files(c.cache_dir, ".geod") == 3);
}

TEST_CASE("corrupted and stale entries are recomputed") {
  Fixture f;
  const RunConfig c = f.config();
  precompute(c);
  const CacheSettings settings = cache_settings(c, false);
  const CachePaths pa = cache_paths(f.dir / "a.off", settings);
  const std::string good = read_text(pa.spectral);

  write_text(pa.spectral, "JUNK" + good.substr(4));
  const CacheReport repaired = precompute(c);
  CHECK(repaired.repaired == 1);
  CHECK(repaired.computed == 0);
  CHECK(read_text(pa.spectral) == good);

  write_text(pa.descriptors, good.substr(0, 40));  // wrong magic and truncated
  CHECK(precompute(c).repaired == 1);

  // editing one mesh invalidates exactly its own entries
  const CachePaths pb = cache_paths(f.dir / "b.off", settings);
  const std::string b_spec = read_text(pb.spectral);
  save_mesh(primitives::bumpy_torus(120, 5), f.dir / "a.off");
  const CacheReport stale = precompute(c);
  CHECK(stale.computed == 2);
  CHECK(read_text(pa.spectral) != good);
  CHECK(read_text(pb.spectral) == b_spec);
}

TEST_CASE("cache contents do not depend on the thread count") {
  Fixture f;
  const RunConfig one = f.config({"runtime.threads=1", "runtime.cache_dir=c1"});
  const RunConfig four = f.config({"runtime.threads=4", "runtime.cache_dir=c4"});
  precompute(one);
  precompute(four);
  for (const char* mesh : {"a.off", "b.off", "a_shuffled.off"}) {
    const CachePaths p1 = cache_paths(f.dir / mesh, cache_settings(one, false));
    const CachePaths p4 = cache_paths(f.dir / mesh, cache_settings(four, false));
    CHECK(read_text(p1.spectral) == read_text(p4.spectral));
    CHECK(read_text(p1.descriptors) == read_text(p4.descriptors));
  }
}

TEST_CASE("precompute failures name the mesh and stage") {
  Fixture f;
  write_text(f.dir / "broken.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n");
  const RunConfig c = parse_config("[data]\ntrain = [\"broken.off\"]\n", f.dir.path());
  try {
    precompute(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("broken.off") != std::string::npos);
    CHECK(msg.find("mesh stage") != std::string::npos);
  }
}

TEST_CASE("training is deterministic and writes the run artifacts") {
  Fixture f;
  const RunConfig a = f.config({"runtime.output_dir=run_a"});
  const RunConfig b = f.config({"runtime.output_dir=run_b"});
  const TrainResult ra = train(a);
  const TrainResult rb = train(b);
  CHECK(ra.iterations_run == 20);
  const std::string log_a = read_text(a.output_dir / run_files::loss_log);
  CHECK(std::count(log_a.begin(), log_a.end(), '\n') == 20);
  CHECK(log_a == read_text(b.output_dir / run_files::loss_log));
  CHECK(read_text(a.output_dir / run_files::checkpoint) == read_text(b.output_dir / run_files::checkpoint));
  CHECK(read_text(a.output_dir / run_files::validation_log) == read_text(b.output_dir / run_files::validation_log));

  const auto m = manifest_of(a);
  CHECK(m["status"] == "complete");
  CHECK(m["iterations_completed"] == 20);
  CHECK(m["basis_size"] == 12);
  CHECK(m["validation"].size() == 4);
  CHECK(m["inputs"].size() == 3);
  CHECK(m["schedule"]["stages"].size() == 2);
  CHECK(m["schedule"]["stages"][1][0] == 10);  // automatic decay at half
  CHECK(m["stage_changes"].size() == 1);
  CHECK(m.contains("timings_seconds"));
  CHECK(m["final_loss"].get<double>() == ra.final_loss);

  const RunConfig other_seed = f.config({"runtime.output_dir=run_c", "network.seed=5"});
  train(other_seed);
  CHECK(read_text(other_seed.output_dir / run_files::loss_log) != log_a);
}

TEST_CASE("a 10000-iteration decayed run records one stage change at 5000") {
  Fixture f;
  const RunConfig c = parse_config("[data]\ntrain = [\"a.off\"]\n", f.dir.path(),
                                   {"spectral.basis_size=6", "descriptor.bins=2", "network.layers=1",
                                    "schedule.stages=[[0, 0.1], [5000, 0.01]]", "schedule.total_iterations=10000",
                                    "training.subsample=12"});
  const TrainResult r = train(c);
  REQUIRE(r.stage_changes.size() == 1);
  CHECK(r.stage_changes[0].iteration == 5000);
  CHECK(r.stage_changes[0].from_time == 0.1);
  CHECK(r.stage_changes[0].to_time == 0.01);
  const auto m = manifest_of(c);
  REQUIRE(m["stage_changes"].size() == 1);
  CHECK(m["stage_changes"][0]["iteration"] == 5000);
  CHECK(m["iterations_completed"] == 10000);
}

TEST_CASE("resume continues exactly where the checkpoint stopped") {
  Fixture f;
  const std::vector<std::string> fixed = {"schedule.kind=fixed_heat", "schedule.stages=[[0, 0.05]]"};
  auto with = [&](std::vector<std::string> extra) {
    extra.insert(extra.end(), fixed.begin(), fixed.end());
    return f.config(extra);
  };
  const RunConfig full = with({"runtime.output_dir=full"});
  train(full);

  train(with({"runtime.output_dir=part", "schedule.total_iterations=10"}));
  // lines past the checkpoint, as an interrupted run would leave them
  std::ofstream(f.dir / "part" / run_files::loss_log, std::ios::app) << "10 123\n11 456\n";
  const TrainResult resumed = train(with({"runtime.output_dir=part"}), true);
  CHECK(resumed.iterations_run == 10);
  CHECK(read_text(f.dir / "part" / run_files::loss_log) == read_text(full.output_dir / run_files::loss_log));
  CHECK(read_text(f.dir / "part" / run_files::checkpoint) == read_text(full.output_dir / run_files::checkpoint));
  CHECK(read_text(f.dir / "part" / run_files::validation_log) ==
        read_text(full.output_dir / run_files::validation_log));

  CHECK(category_of([&] { train(with({"runtime.output_dir=nothing"}), true); }) == ErrorCategory::io);
  CHECK(category_of([&] { train(with({"runtime.output_dir=part", "network.layers=2"}), true); }) ==
        ErrorCategory::config);
}

TEST_CASE("numeric blow-up aborts with a manifest snapshot") {
  Fixture f;
  const RunConfig c = f.config({"optimizer.learning_rate=1e9", "optimizer.ridge=0", "schedule.total_iterations=200",
                                "training.checkpoint_every=1000"});
  CHECK(category_of([&] { train(c); }) == ErrorCategory::numeric);
  const auto m = manifest_of(c);
  CHECK(m["status"].get<std::string>().rfind("aborted", 0) == 0);
  CHECK(m["iterations_completed"].get<int>() < 200);
}

TEST_CASE("oversized training meshes are rejected") {
  Fixture f;
  CHECK(category_of([&] { train(f.config({"training.max_vertices=130"})); }) == ErrorCategory::validation);
}

TEST_CASE("explicit and automatic schedules") {
  Fixture f;
  const RunConfig c = f.config();
  std::vector<ShapeBundle> shapes = {load_shape(f.dir / "a.off", cache_settings(c, false)),
                                     load_shape(f.dir / "b.off", cache_settings(c, false))};
  const Schedule autod = resolve_schedule(c, shapes);
  REQUIRE(autod.stages.size() == 2);
  CHECK(autod.stages[1].start_iteration == 10);
  CHECK(autod.stages[1].time < autod.stages[0].time);
  const Schedule autof = resolve_schedule(f.config({"schedule.kind=fixed_heat"}), shapes);
  REQUIRE(autof.stages.size() == 1);
  CHECK(autof.stages[0].time == autod.stages[0].time);
  CHECK(resolve_schedule(f.config({"schedule.kind=geodesic"}), shapes).uses_geodesics());
  CHECK_THROWS_AS(resolve_schedule(f.config({"schedule.kind=fixed_heat", "schedule.stages=[[0,1],[5,0.5]]"}), shapes),
                  Error);
}

TEST_CASE("an untrained network still produces a map") {
  Fixture f;
  const RunConfig c = f.config();
  const ShapeBundle a = load_shape(f.dir / "a.off", cache_settings(c, false));
  NetworkParams zero = init_params(a.descriptors.dim(), 2, 0).zeros_like();
  const SoftCorrespondence soft = correspond(zero, a, a, c.ridge);
  // zero weights make every residual block the identity, so the map comes straight from the descriptors
  const Matrix fa = project(a.descriptors.values, a.basis);
  const Matrix expected = soft_map(solve_fmap(fa, fa, c.ridge), a.basis, a.basis).soft_map;
  CHECK((soft.soft_map - expected).cwiseAbs().maxCoeff() < 1e-12);
  const PointMap map = extract_matches(soft);
  CHECK(map.matches.size() == static_cast<std::size_t>(a.n_vertices()));

  const NetworkParams narrow = init_params(8, 1, 0);
  CHECK(category_of([&] { correspond(narrow, a, a, c.ridge); }) == ErrorCategory::validation);
}

TEST_CASE("infer writes matches and never touches supervisors") {
  Fixture f;
  const RunConfig c = f.config({"schedule.kind=geodesic"});
  train(c);
  const std::size_t geod_files = count_files(c.cache_dir, ".geod");
  fs::remove_all(c.cache_dir);
  const InferResult r = infer(c, c.output_dir / run_files::checkpoint, f.dir / "a.off", f.dir / "a_shuffled.off",
                              f.dir / "infer", true);
  CHECK(geod_files == 3);
  CHECK(count_files(c.cache_dir, ".geod") == 0);
  CHECK(load_ground_truth(f.dir / "infer" / "matches.txt") == r.map.matches);
  CHECK(load_soft_map(f.dir / "infer" / "soft_map.qmap") == r.soft.soft_map);

  CHECK(category_of([&] { infer(c, f.dir / "missing.prms", f.dir / "a.off", f.dir / "a.off", f.dir / "x"); }) ==
        ErrorCategory::io);
  CHECK(category_of([&] {
          infer(f.config({"schedule.kind=geodesic", "spectral.basis_size=10"}), c.output_dir / run_files::checkpoint,
                f.dir / "a.off", f.dir / "a.off", f.dir / "x");
        }) == ErrorCategory::config);
  write_text(f.dir / "bad.qmap", "QMAP0");
  CHECK(category_of([&] { load_soft_map(f.dir / "bad.qmap"); }) == ErrorCategory::parse);
}

TEST_CASE("evaluation protocol at the pipeline level") {
  const std::vector<TestPair> pairs = {{"a", "a", {}}, {"b", "b", {}}};
  const Vector grid = threshold_grid();

  const EvaluationReport perfect = evaluate_errors(pairs, {Vector::Zero(30), Vector::Zero(40)}, grid);
  CHECK(perfect.pooled_summary.auc == 1.0);
  CHECK(perfect.pooled.fractions.minCoeff() == 1.0);

  Vector e(5);
  e << 0.0, 0.02, 0.05, 0.2, 0.4;
  const EvaluationReport same = evaluate_errors(pairs, {e, e}, grid);
  CHECK(same.pooled.fractions == same.pairs[0].curve.fractions);
  CHECK(same.pooled.auc == same.pairs[1].curve.auc);

  CHECK_THROWS_AS(evaluate_errors({}, {}, grid), Error);
  CHECK_THROWS_AS(evaluate_errors(pairs, {e}, grid), Error);
}

TEST_CASE("evaluate writes per-pair and pooled outputs") {
  Fixture f;
  const RunConfig c = f.config({"runtime.threads=2"});
  train(c);
  const EvaluationReport r = evaluate(c, c.output_dir / run_files::checkpoint);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].curve.thresholds.size() == 101);
  const fs::path dir = c.output_dir / "evaluation";
  for (const char* name : {"pair_0.csv", "pair_1.csv", "pooled.csv", "summary.json", "curves.svg",
                           "pair_0_matches.txt"}) {
    CHECK_MESSAGE(fs::exists(dir / name), name);
  }
  const auto summary = nlohmann::json::parse(read_text(dir / "summary.json"));
  CHECK(summary["pooled"]["auc"].get<double>() == r.pooled_summary.auc);
  CHECK(summary["pairs"][1]["ground_truth"] == "identity");

  CHECK(category_of([&] { evaluate(f.config({"data.test_pairs=[]"}), c.output_dir / run_files::checkpoint); }) ==
        ErrorCategory::validation);
  write_text(f.dir / "short_gt.txt", "0\n1\n");
  CHECK(category_of([&] {
          evaluate(f.config({"data.test_pairs=[[\"a.off\", \"a.off\", \"short_gt.txt\"]]"}),
                   c.output_dir / run_files::checkpoint);
        }) == ErrorCategory::validation);
  CHECK(category_of([&] {
          evaluate(f.config({"data.test_pairs=[[\"a.off\", \"b.off\"]]"}), c.output_dir / run_files::checkpoint);
        }) == ErrorCategory::validation);
}

TEST_CASE("bench_timing table") {
  TempDir dir("bench");
  const auto rows = bench_timing({{"small", primitives::bumpy_torus(200, 3)}}, 20, 0.01, dir.path());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].label == "small");
  CHECK(rows[0].vertices > 150);
  CHECK(rows[0].heat_seconds > 0.0);
  CHECK(rows[0].eig_heat_seconds >= rows[0].heat_seconds);
  CHECK(rows[0].geodesic_seconds > 0.0);
  const std::string csv = read_text(dir / "timing.csv");
  CHECK(csv.rfind("label,vertices,heat_s,eig_heat_s,geodesic_s,geodesic_over_heat\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(read_text(dir / "timing.svg").find("log scale") != std::string::npos);
  CHECK_THROWS_AS(bench_timing({}, 20, 0.01), Error);
}
