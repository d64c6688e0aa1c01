#pragma once

// Diffusion-time schedules, per-stage supervisor kernels and the validation loss.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "heatcorr/corrnet.hpp"
#include "heatcorr/supervisor.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

enum class ScheduleKind { fixed_heat, decayed_heat, geodesic };

std::string to_string(ScheduleKind kind);
/// Accepts "fixed_heat", "decayed_heat", "geodesic".
ScheduleKind parse_schedule_kind(const std::string& text);

struct Stage {
  std::int64_t start_iteration = 0;
  double time = 0.0;  // unused for geodesic schedules
};

struct Schedule {
  ScheduleKind kind = ScheduleKind::decayed_heat;
  std::vector<Stage> stages;
  std::int64_t total_iterations = 0;

  static Schedule fixed(double t, std::int64_t total_iterations);
  static Schedule decayed(std::vector<Stage> stages, std::int64_t total_iterations);
  static Schedule geodesic(std::int64_t total_iterations);

  /// Throws config errors for empty/unsorted stages, a first stage not at 0,
  /// non-positive times, or (decayed) non-decreasing times.
  void validate() const;
  /// Index of the stage containing `iteration`; usage error when out of range.
  std::size_t stage_at(std::int64_t iteration) const;
  double initial_time() const { return stages.front().time; }
  bool uses_geodesics() const { return kind == ScheduleKind::geodesic; }
};

/// Uncached kernel for one shape. Geodesic schedules return bundle.supervisor,
/// which must already hold the distance matrix.
SupervisorKernel kernel_at(const Schedule& schedule, std::int64_t iteration, const ShapeBundle& bundle);

/// Heat kernels built from the cached bases, one per (shape, stage). Entries of
/// stages that are neither the first nor the current one are dropped when the
/// schedule advances.
class KernelCache {
 public:
  explicit KernelCache(Schedule schedule);

  const Matrix& kernel_at(std::int64_t iteration, std::size_t shape_id, const ShapeBundle& bundle);
  /// Stage-0 kernel, used for validation at every iteration.
  const Matrix& initial_kernel(std::size_t shape_id, const ShapeBundle& bundle);

  const Schedule& schedule() const { return schedule_; }
  std::size_t kernels_computed() const { return computed_; }
  double seconds_computing() const { return seconds_; }

 private:
  const Matrix& get(std::size_t stage, std::size_t shape_id, const ShapeBundle& bundle);

  Schedule schedule_;
  std::map<std::pair<std::size_t, std::size_t>, Matrix> kernels_;  // (stage, shape) -> K
  std::size_t current_stage_ = 0;
  std::size_t computed_ = 0;
  double seconds_ = 0.0;
};

struct ShapePair {
  std::size_t source = 0;
  std::size_t target = 0;
};

/// Mean distortion loss over `pairs` (indices into `shapes`), always at the
/// stage-0 diffusion time. Uses all vertices.
double validation_loss(const NetworkParams& params, const std::vector<ShapePair>& pairs,
                       const std::vector<ShapeBundle>& shapes, KernelCache& kernels, const LossConfig& config);

}  // namespace heatcorr
