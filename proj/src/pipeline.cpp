#include "heatcorr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "heatcorr/binary_io.hpp"
#include "heatcorr/geodesic.hpp"
#include "heatcorr/hash.hpp"
#include "heatcorr/log.hpp"
#include "heatcorr/parallel.hpp"
#include "json.hpp"

namespace heatcorr {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<ShapeBundle> load_training_shapes(const std::vector<fs::path>& meshes, const CacheSettings& settings,
                                              Index max_vertices, const char* split) {
  std::vector<ShapeBundle> shapes;
  shapes.reserve(meshes.size());
  for (const auto& m : meshes) {
    shapes.push_back(load_shape(m, settings));
    const Index n = shapes.back().n_vertices();
    if (n > max_vertices) {
      throw Error(ErrorCategory::validation,
                  std::string(split) + " mesh " + m.string() + " has " + std::to_string(n) +
                      " vertices; training accepts at most " + std::to_string(max_vertices) +
                      ". Decimate it first (for example quadric edge collapse to about 7000 vertices).");
    }
    if (shapes.back().descriptors.dim() != shapes.front().descriptors.dim()) {
      throw Error(ErrorCategory::validation, m.string() + ": descriptor dimension differs from the other meshes");
    }
  }
  return shapes;
}

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Keeps the log lines whose leading iteration number is below `limit`.
std::vector<std::string> truncate_log(const fs::path& path, std::int64_t limit) {
  std::vector<std::string> kept;
  for (const auto& line : read_lines(path)) {
    std::int64_t it = 0;
    if (std::sscanf(line.c_str(), "%lld", reinterpret_cast<long long*>(&it)) == 1 && it < limit) {
      kept.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : kept) os << l << '\n';
  return kept;
}

std::string log_line(std::int64_t it, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld %.17g", static_cast<long long>(it), value);
  return buf;
}

double log_value(const std::string& line) {
  long long it = 0;
  double v = 0.0;
  if (std::sscanf(line.c_str(), "%lld %lg", &it, &v) != 2) {
    throw Error(ErrorCategory::parse, "malformed log line '" + line + "'");
  }
  return v;
}

void write_json(const json& j, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
    os << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json schedule_json(const Schedule& s) {
  json stages = json::array();
  for (const auto& st : s.stages) stages.push_back({st.start_iteration, st.time});
  return {{"kind", to_string(s.kind)}, {"stages", stages}, {"total_iterations", s.total_iterations}};
}

std::vector<ShapePair> all_ordered_pairs(std::size_t n) {
  std::vector<ShapePair> pairs;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) pairs.push_back({s, t});
  }
  return pairs;
}

// Basis size a checkpoint was trained with, read from the manifest beside it.
std::optional<Index> checkpoint_basis_size(const fs::path& checkpoint) {
  const fs::path manifest = checkpoint.parent_path() / run_files::manifest;
  if (!fs::exists(manifest)) return std::nullopt;
  std::ifstream is(manifest);
  try {
    const json j = json::parse(is);
    if (j.contains("basis_size")) return j["basis_size"].get<Index>();
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::parse, manifest.string() + ": " + e.what());
  }
  return std::nullopt;
}

NetworkParams load_network(const RunConfig& config, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw Error(ErrorCategory::io, "checkpoint not found: " + checkpoint.string());
  if (const auto e = checkpoint_basis_size(checkpoint); e && *e != config.basis_size) {
    throw Error(ErrorCategory::config, "checkpoint was trained with basis size " + std::to_string(*e) +
                                           " but the config asks for " + std::to_string(config.basis_size));
  }
  return load_checkpoint(checkpoint).params;
}

std::vector<Index> ground_truth_for(const TestPair& pair, Index n_source, Index n_target) {
  if (!pair.ground_truth.empty()) return load_ground_truth(pair.ground_truth);
  if (n_source != n_target) {
    throw Error(ErrorCategory::validation, "identity ground truth needs equal vertex counts: " +
                                               pair.source.string() + " vs " + pair.target.string());
  }
  return iota_indices(n_source);
}

}  // namespace

std::vector<fs::path> all_meshes(const RunConfig& config) {
  std::vector<fs::path> out = config.train_meshes;
  out.insert(out.end(), config.val_meshes.begin(), config.val_meshes.end());
  for (const auto& p : config.test_pairs) {
    out.push_back(p.source);
    out.push_back(p.target);
  }
  return out;
}

CacheReport precompute(const RunConfig& config) {
  config.validate();
  const bool geodesic = config.schedule_kind == ScheduleKind::geodesic;
  // only training and validation meshes need supervisors
  std::vector<fs::path> supervised = config.train_meshes;
  supervised.insert(supervised.end(), config.val_meshes.begin(), config.val_meshes.end());
  CacheReport report = precompute_shapes(supervised, cache_settings(config, geodesic));
  std::vector<fs::path> test;
  for (const auto& p : config.test_pairs) {
    test.push_back(p.source);
    test.push_back(p.target);
  }
  report += precompute_shapes(test, cache_settings(config, false));
  log::info("precompute: " + std::to_string(report.computed) + " computed, " + std::to_string(report.reused) +
            " reused, " + std::to_string(report.repaired) + " repaired");
  return report;
}

Schedule resolve_schedule(const RunConfig& config, const std::vector<ShapeBundle>& train_shapes) {
  switch (config.schedule_kind) {
    case ScheduleKind::geodesic:
      return Schedule::geodesic(config.total_iterations);
    case ScheduleKind::fixed_heat:
    case ScheduleKind::decayed_heat:
      break;
  }
  if (!config.stages.empty()) {
    if (config.schedule_kind == ScheduleKind::fixed_heat) {
      if (config.stages.size() != 1) throw Error(ErrorCategory::config, "a fixed_heat schedule has one stage");
      return Schedule::fixed(config.stages.front().time, config.total_iterations);
    }
    return Schedule::decayed(config.stages, config.total_iterations);
  }
  if (train_shapes.empty()) throw Error(ErrorCategory::config, "automatic stage times need training shapes");
  auto pick = [&](TimeTarget target) {
    std::vector<double> times;
    for (const auto& s : train_shapes) times.push_back(select_time(s.basis, config.time_samples, target, config.seed));
    return median(times);
  };
  const double coarse = pick(TimeTarget::coarse);
  if (config.schedule_kind == ScheduleKind::fixed_heat) return Schedule::fixed(coarse, config.total_iterations);
  const double fine = pick(TimeTarget::fine);
  return Schedule::decayed({{0, coarse}, {config.total_iterations / 2, fine}}, config.total_iterations);
}

TrainResult train(const RunConfig& config, bool resume) {
  config.validate();
  if (config.train_meshes.empty()) throw Error(ErrorCategory::config, "data.train lists no meshes");
  const auto t_start = Clock::now();
  std::map<std::string, double> timings;

  const bool geodesic = config.schedule_kind == ScheduleKind::geodesic;
  const CacheSettings settings = cache_settings(config, geodesic);
  auto t0 = Clock::now();
  const std::vector<ShapeBundle> shapes =
      load_training_shapes(config.train_meshes, settings, config.max_train_vertices, "training");
  const std::vector<ShapeBundle> val_shapes =
      load_training_shapes(config.val_meshes, settings, config.max_train_vertices, "validation");
  if (!val_shapes.empty() && val_shapes.front().descriptors.dim() != shapes.front().descriptors.dim()) {
    throw Error(ErrorCategory::validation, "validation descriptors differ in dimension from training descriptors");
  }
  timings["load_shapes"] = seconds_since(t0);

  t0 = Clock::now();
  const Schedule schedule = resolve_schedule(config, shapes);
  timings["schedule"] = seconds_since(t0);

  const Index dim = shapes.front().descriptors.dim();
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  const fs::path ckpt_path = out / run_files::checkpoint;
  const fs::path loss_path = out / run_files::loss_log;
  const fs::path val_path = out / run_files::validation_log;

  NetworkParams params;
  AdamState adam;
  std::int64_t start = 0;
  std::vector<std::string> prior_losses, prior_validation;
  if (resume) {
    if (!fs::exists(ckpt_path)) throw Error(ErrorCategory::io, "nothing to resume: " + ckpt_path.string() + " is missing");
    Checkpoint c = load_checkpoint(ckpt_path);
    if (c.params.dim() != dim || c.params.layer_count() != config.layers) {
      throw Error(ErrorCategory::config, "checkpoint network shape does not match the config");
    }
    params = std::move(c.params);
    adam = std::move(c.state);
    start = adam.step_count;
    if (start > config.total_iterations) {
      throw Error(ErrorCategory::config, "checkpoint is at step " + std::to_string(start) +
                                            ", beyond schedule.total_iterations");
    }
    prior_losses = truncate_log(loss_path, start);
    prior_validation = truncate_log(val_path, start);
    log::info("resuming at iteration " + std::to_string(start));
  } else {
    params = init_params(dim, config.layers, config.seed);
    adam = AdamState::fresh(params, config.learning_rate);
    adam.beta1 = config.beta1;
    adam.beta2 = config.beta2;
    adam.epsilon = config.epsilon;
    std::ofstream(loss_path, std::ios::trunc);
    std::ofstream(val_path, std::ios::trunc);
  }

  json inputs = json::array();
  for (const auto& p : config.train_meshes) inputs.push_back({{"path", p.string()}, {"split", "train"}, {"hash", hash_file(p)}});
  for (const auto& p : config.val_meshes) inputs.push_back({{"path", p.string()}, {"split", "val"}, {"hash", hash_file(p)}});

  TrainResult result;
  result.checkpoint = ckpt_path;
  result.manifest = out / run_files::manifest;
  result.schedule = schedule;
  for (std::size_t s = 1; s < schedule.stages.size(); ++s) {
    const auto& st = schedule.stages[s];
    if (st.start_iteration < start) result.stage_changes.push_back({st.start_iteration, schedule.stages[s - 1].time, st.time});
  }
  json validation = json::array();
  for (const auto& line : prior_validation) {
    validation.push_back({{"iteration", std::stoll(line)}, {"loss", log_value(line)}});
  }
  if (!prior_losses.empty()) {
    result.first_loss = log_value(prior_losses.front());
    result.final_loss = log_value(prior_losses.back());
  }

  auto write_manifest = [&](const std::string& status, std::int64_t completed) {
    json changes = json::array();
    for (const auto& c : result.stage_changes) {
      changes.push_back({{"iteration", c.iteration}, {"from_time", c.from_time}, {"to_time", c.to_time}});
    }
    json j;
    j["version"] = kVersion;
    j["status"] = status;
    j["config"] = json::parse(config.snapshot());
    j["inputs"] = inputs;
    j["seed"] = config.seed;
    j["threads"] = config.threads;
    j["basis_size"] = config.basis_size;
    j["descriptor_dim"] = dim;
    j["layers"] = config.layers;
    j["pair_sampling"] = "uniform over ordered training pairs, self pairs included";
    j["schedule"] = schedule_json(schedule);
    j["stage_changes"] = changes;
    j["iterations_completed"] = completed;
    j["loss_log"] = run_files::loss_log;
    j["validation_log"] = run_files::validation_log;
    j["validation"] = validation;
    j["first_loss"] = result.first_loss;
    j["final_loss"] = result.final_loss;
    j["timings_seconds"] = timings;
    write_json(j, result.manifest);
  };

  const LossConfig loss_cfg{config.ridge};
  KernelCache kernels(schedule);
  KernelCache val_kernels(schedule);
  const auto val_pairs = all_ordered_pairs(val_shapes.size());
  std::ofstream loss_log(loss_path, std::ios::app);
  std::ofstream val_log(val_path, std::ios::app);
  const auto n_shapes = static_cast<Index>(shapes.size());
  double t_validation = 0.0, t_checkpoint = 0.0;
  const auto t_train = Clock::now();

  auto checkpoint = [&](std::int64_t completed) {
    const auto tc = Clock::now();
    loss_log.flush();
    val_log.flush();
    save_checkpoint(params, adam, ckpt_path.string() + ".tmp");
    fs::rename(ckpt_path.string() + ".tmp", ckpt_path);
    t_checkpoint += seconds_since(tc);
    timings["training"] = seconds_since(t_train) - t_validation - t_checkpoint;
    timings["kernels"] = kernels.seconds_computing();
    timings["validation"] = t_validation;
    timings["checkpointing"] = t_checkpoint;
    timings["total"] = seconds_since(t_start);
    write_manifest(completed == config.total_iterations ? "complete" : "running", completed);
  };

  for (std::int64_t it = start; it < config.total_iterations; ++it) {
    std::mt19937_64 rng(mix_seed(config.seed ^ mix_seed(static_cast<std::uint64_t>(it))));
    std::uniform_int_distribution<Index> pick(0, n_shapes - 1);
    const auto s = static_cast<std::size_t>(pick(rng));
    const auto t = static_cast<std::size_t>(pick(rng));
    const ShapeBundle& src = shapes[s];
    const ShapeBundle& tgt = shapes[t];
    // shuffling: a random permutation of each shape, optionally truncated
    std::vector<Index> src_perm = iota_indices(src.n_vertices());
    std::vector<Index> tgt_perm = iota_indices(tgt.n_vertices());
    std::shuffle(src_perm.begin(), src_perm.end(), rng);
    std::shuffle(tgt_perm.begin(), tgt_perm.end(), rng);
    src_perm.resize(static_cast<std::size_t>(effective_subsample(config, src.n_vertices())));
    tgt_perm.resize(static_cast<std::size_t>(effective_subsample(config, tgt.n_vertices())));

    if (it > 0 && schedule.stage_at(it) != schedule.stage_at(it - 1)) {
      const auto& st = schedule.stages[schedule.stage_at(it)];
      result.stage_changes.push_back({it, schedule.stages[schedule.stage_at(it - 1)].time, st.time});
      log::info("iteration " + std::to_string(it) + ": supervisor time " + std::to_string(st.time));
    }

    double loss = 0.0;
    try {
      const Matrix& ks = kernels.kernel_at(it, s, src);
      const Matrix& kt = kernels.kernel_at(it, t, tgt);
      const PairForward fwd = forward_pair(params, src, tgt, ks, kt, loss_cfg, src_perm, tgt_perm);
      loss = fwd.loss;
      if (!std::isfinite(loss)) {
        throw Error(ErrorCategory::numeric, "non-finite loss at iteration " + std::to_string(it));
      }
      adam_step(params, backward(params, fwd), adam);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::numeric) throw;
      loss_log.flush();
      write_manifest(std::string("aborted: ") + e.what(), it);
      throw;
    }
    loss_log << log_line(it, loss) << '\n';
    if (it == 0) result.first_loss = loss;
    result.final_loss = loss;

    const std::int64_t done = it + 1;
    if (!val_shapes.empty() && done % config.validation_every == 0) {
      const auto tv = Clock::now();
      const double v = validation_loss(params, val_pairs, val_shapes, val_kernels, loss_cfg);
      val_log << log_line(it, v) << '\n';
      validation.push_back({{"iteration", it}, {"loss", v}});
      t_validation += seconds_since(tv);
    }
    if (done % config.checkpoint_every == 0 || done == config.total_iterations) checkpoint(done);
  }
  if (start == config.total_iterations) checkpoint(start);
  result.iterations_run = config.total_iterations - start;
  return result;
}

SoftCorrespondence correspond(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                              double ridge) {
  if (source.descriptors.dim() != params.dim() || target.descriptors.dim() != params.dim()) {
    throw Error(ErrorCategory::validation, "descriptor dimension " + std::to_string(source.descriptors.dim()) +
                                               " does not match the network width " + std::to_string(params.dim()));
  }
  if (source.basis.size() != target.basis.size()) {
    throw Error(ErrorCategory::validation, "source and target bases differ in size");
  }
  const Matrix f = project(forward_features(params, source.descriptors.values), source.basis);
  const Matrix g = project(forward_features(params, target.descriptors.values), target.basis);
  return soft_map(solve_fmap(f, g, ridge), source.basis, target.basis);
}

InferResult infer(const RunConfig& config, const fs::path& checkpoint, const fs::path& source, const fs::path& target,
                  const fs::path& out_dir, bool write_dense) {
  const NetworkParams params = load_network(config, checkpoint);
  const CacheSettings settings = cache_settings(config, false);
  const ShapeBundle src = load_shape(source, settings);
  const ShapeBundle tgt = load_shape(target, settings);
  InferResult r;
  r.soft = correspond(params, src, tgt, config.ridge);
  r.map = extract_matches(r.soft);
  fs::create_directories(out_dir);
  save_matches(r.map, out_dir / "matches.txt");
  if (write_dense) save_soft_map(r.soft.soft_map, out_dir / "soft_map.qmap");
  if (r.soft.zero_columns > 0) {
    log::warn(std::to_string(r.soft.zero_columns) + " source vertices received a uniform distribution");
  }
  return r;
}

void save_soft_map(const Matrix& q, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  binio::write_magic(os, "QMAP1");
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(q.rows()));
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(q.cols()));
  binio::write_array(os, q.data(), static_cast<std::size_t>(q.size()));
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

Matrix load_soft_map(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string());
  binio::expect_magic(is, "QMAP1");
  const auto rows = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "rows"));
  const auto cols = static_cast<Index>(binio::read_pod<std::uint64_t>(is, "cols"));
  if (rows < 1 || cols < 1 || rows * cols > (Index{1} << 32)) {
    throw Error(ErrorCategory::parse, path.string() + ": implausible soft map dimensions");
  }
  Matrix q(rows, cols);
  binio::read_array(is, q.data(), static_cast<std::size_t>(q.size()), "soft map");
  return q;
}

EvaluationReport evaluate_errors(const std::vector<TestPair>& pairs, const std::vector<Vector>& errors,
                                 const Vector& thresholds) {
  if (pairs.empty()) throw Error(ErrorCategory::validation, "the test set is empty");
  if (pairs.size() != errors.size()) throw Error(ErrorCategory::validation, "one error vector per pair is required");
  EvaluationReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PairEvaluation pe;
    pe.pair = pairs[i];
    pe.curve = curve_from_errors(errors[i], thresholds);
    pe.summary = summarize(errors[i], pe.curve);
    report.pairs.push_back(std::move(pe));
  }
  const Vector pooled = pool_errors(errors);
  report.pooled = curve_from_errors(pooled, thresholds);
  report.pooled_summary = summarize(pooled, report.pooled);
  return report;
}

EvaluationReport evaluate(const RunConfig& config, const fs::path& checkpoint) {
  if (config.test_pairs.empty()) throw Error(ErrorCategory::validation, "the test set is empty");
  config.validate();
  const NetworkParams params = load_network(config, checkpoint);
  const CacheSettings settings = cache_settings(config, false);
  const fs::path dir = config.output_dir / "evaluation";
  fs::create_directories(dir);

  // fill caches up front so the parallel workers below only read them
  precompute_shapes(all_meshes(config), settings);
  CacheSettings inner = settings;
  inner.threads = 1;
  std::vector<Vector> errors(config.test_pairs.size());
  parallel_for(static_cast<Index>(config.test_pairs.size()), config.threads, [&](Index i) {
    const TestPair& pair = config.test_pairs[static_cast<std::size_t>(i)];
    const ShapeBundle src = load_shape(pair.source, inner);
    const ShapeBundle tgt = load_shape(pair.target, inner);
    const PointMap map = extract_matches(correspond(params, src, tgt, config.ridge));
    const auto gt = ground_truth_for(pair, src.n_vertices(), tgt.n_vertices());
    if (static_cast<Index>(gt.size()) != src.n_vertices()) {
      throw Error(ErrorCategory::validation, pair.ground_truth.string() + " has " + std::to_string(gt.size()) +
                                                 " entries but the source mesh has " +
                                                 std::to_string(src.n_vertices()) + " vertices");
    }
    save_matches(map, dir / ("pair_" + std::to_string(i) + "_matches.txt"));
    errors[static_cast<std::size_t>(i)] = match_errors(map, gt, tgt.mesh, 1);
  });

  EvaluationReport report = evaluate_errors(config.test_pairs, errors, threshold_grid());
  json summary;
  auto summary_json = [](const ErrorSummary& s) {
    return json{{"auc", s.auc}, {"mean_error", s.mean_error}, {"median_error", s.median_error}};
  };
  summary["pooled"] = summary_json(report.pooled_summary);
  summary["pooling"] = "per vertex across all pairs";
  summary["pairs"] = json::array();
  std::vector<std::pair<std::string, ErrorCurve>> curves;
  for (std::size_t i = 0; i < report.pairs.size(); ++i) {
    const auto& pe = report.pairs[i];
    write_curve_csv(pe.curve, dir / ("pair_" + std::to_string(i) + ".csv"));
    json entry = summary_json(pe.summary);
    entry["source"] = pe.pair.source.string();
    entry["target"] = pe.pair.target.string();
    entry["ground_truth"] = pe.pair.ground_truth.empty() ? std::string("identity") : pe.pair.ground_truth.string();
    summary["pairs"].push_back(entry);
    curves.emplace_back(pe.pair.source.stem().string() + " -> " + pe.pair.target.stem().string(), pe.curve);
  }
  write_curve_csv(report.pooled, dir / "pooled.csv");
  curves.emplace_back("pooled", report.pooled);
  write_json(summary, dir / "summary.json");
  write_curves_svg(curves, dir / "curves.svg");
  log::info("pooled AUC " + std::to_string(report.pooled_summary.auc));
  return report;
}

std::vector<TimingRow> bench_timing(const std::vector<TimingMesh>& meshes, Index basis_size, double time,
                                    const fs::path& out_dir) {
  if (meshes.empty()) throw Error(ErrorCategory::usage, "bench-timing needs at least one mesh");
  std::vector<TimingRow> rows;
  for (const auto& tm : meshes) {
    const TriMesh mesh = normalize_to_unit_area(tm.mesh);
    TimingRow row;
    row.label = tm.label;
    row.vertices = mesh.n_vertices();

    auto t0 = Clock::now();
    const SpectralBasis basis = eigendecompose(build_laplacian(mesh), basis_size);
    HeatKernelMatrix k = heat_kernel(basis, time);
    row.eig_heat_seconds = seconds_since(t0);

    t0 = Clock::now();
    k = heat_kernel(basis, time);
    row.heat_seconds = seconds_since(t0);

    t0 = Clock::now();
    const GeodesicMatrix g = all_pairs_geodesic(mesh, 1);
    row.geodesic_seconds = seconds_since(t0);
    if (k.values(0, 0) <= 0.0 || g.values.rows() != row.vertices) {
      throw Error(ErrorCategory::numeric, tm.label + ": benchmark produced an invalid result");
    }
    log::info(tm.label + ": N=" + std::to_string(row.vertices) + " heat " + std::to_string(row.heat_seconds) +
              " s, eig+heat " + std::to_string(row.eig_heat_seconds) + " s, geodesic " +
              std::to_string(row.geodesic_seconds) + " s");
    rows.push_back(row);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / "timing.csv");
    if (!os) throw Error(ErrorCategory::io, "cannot write " + (out_dir / "timing.csv").string());
    os << "label,vertices,heat_s,eig_heat_s,geodesic_s,geodesic_over_heat\n";
    std::vector<PlotSeries> series = {{"heat kernel (cached basis)", {}, {}},
                                      {"eigendecomposition + heat kernel", {}, {}},
                                      {"all-pairs geodesics", {}, {}}};
    std::vector<TimingRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.vertices < b.vertices; });
    for (const auto& r : rows) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%lld,%.6g,%.6g,%.6g,%.4g\n", r.label.c_str(), static_cast<long long>(r.vertices),
                    r.heat_seconds, r.eig_heat_seconds, r.geodesic_seconds, r.geodesic_seconds / r.heat_seconds);
      os << buf;
    }
    for (const auto& r : sorted) {
      const double x = static_cast<double>(r.vertices);
      series[0].x.push_back(x);
      series[0].y.push_back(r.heat_seconds);
      series[1].x.push_back(x);
      series[1].y.push_back(r.eig_heat_seconds);
      series[2].x.push_back(x);
      series[2].y.push_back(r.geodesic_seconds);
    }
    write_line_plot_svg(series, "Supervisor computation time", "number of vertices", "seconds (log scale)", true,
                        out_dir / "timing.svg");
  }
  return rows;
}

}  // namespace heatcorr
