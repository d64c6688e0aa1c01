#pragma once

// End-to-end drivers behind the command-line tool: cache population,
// training, inference, evaluation and the heat-vs-geodesic timing benchmark.
// All outputs land under `RunConfig::output_dir` unless stated otherwise.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "heatcorr/cache.hpp"
#include "heatcorr/config.hpp"
#include "heatcorr/corrnet.hpp"
#include "heatcorr/curriculum.hpp"
#include "heatcorr/evaluation.hpp"

namespace heatcorr {

inline constexpr const char* kVersion = "0.1.0";

/// Output file names inside the run directory.
namespace run_files {
inline constexpr const char* checkpoint = "checkpoint.prms";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* loss_log = "loss.log";
inline constexpr const char* validation_log = "validation.log";
}  // namespace run_files

/// Every mesh named by the config (train, validation and test pairs).
std::vector<std::filesystem::path> all_meshes(const RunConfig& config);

CacheReport precompute(const RunConfig& config);

/// Resolves "auto" stage times. Fixed schedules use the coarse time; decayed
/// schedules go from the coarse to the fine time at half of the run. Times
/// are medians of select_time over the given shapes.
Schedule resolve_schedule(const RunConfig& config, const std::vector<ShapeBundle>& train_shapes);

struct StageChange {
  std::int64_t iteration = 0;
  double from_time = 0.0;
  double to_time = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  Schedule schedule;
  double first_loss = 0.0;  // loss logged at iteration 0 (also after a resume)
  double final_loss = 0.0;
  std::int64_t iterations_run = 0;
  std::vector<StageChange> stage_changes;
};

/// Runs the training loop. With `resume`, continues from the checkpoint in
/// the output directory and truncates the logs to the checkpointed step.
TrainResult train(const RunConfig& config, bool resume = false);

/// Single forward pass without any supervisor kernel.
SoftCorrespondence correspond(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                              double ridge);

struct InferResult {
  PointMap map;
  SoftCorrespondence soft;
};

/// Loads (or builds) the caches of both meshes, runs the network and writes
/// `matches.txt` (and `soft_map.qmap` with `write_dense`) into `out_dir`.
InferResult infer(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& source, const std::filesystem::path& target,
                  const std::filesystem::path& out_dir, bool write_dense = false);

/// Dense soft map file: magic "QMAP1", u64 rows, u64 cols, column-major f64.
void save_soft_map(const Matrix& q, const std::filesystem::path& path);
Matrix load_soft_map(const std::filesystem::path& path);

struct PairEvaluation {
  TestPair pair;
  ErrorCurve curve;
  ErrorSummary summary;
};

struct EvaluationReport {
  std::vector<PairEvaluation> pairs;
  ErrorCurve pooled;
  ErrorSummary pooled_summary;
};

/// Evaluates every configured test pair; writes per-pair and pooled curve
/// CSVs, `summary.json` and `curves.svg` into `<output_dir>/evaluation`.
EvaluationReport evaluate(const RunConfig& config, const std::filesystem::path& checkpoint);

/// Pools precomputed per-pair errors; split out so the protocol can be
/// exercised without a network.
EvaluationReport evaluate_errors(const std::vector<TestPair>& pairs, const std::vector<Vector>& errors,
                                 const Vector& thresholds);

struct TimingRow {
  std::string label;
  Index vertices = 0;
  double heat_seconds = 0.0;        // heat kernel from a cached basis
  double eig_heat_seconds = 0.0;    // Laplacian + eigendecomposition + heat kernel
  double geodesic_seconds = 0.0;    // all-pairs graph geodesics, one thread
};

struct TimingMesh {
  std::string label;
  TriMesh mesh;
};

/// Times the three supervisor paths for each mesh. Writes `timing.csv` and a
/// log-scale `timing.svg` into `out_dir` when it is nonempty.
std::vector<TimingRow> bench_timing(const std::vector<TimingMesh>& meshes, Index basis_size, double time,
                                    const std::filesystem::path& out_dir = {});

}  // namespace heatcorr
