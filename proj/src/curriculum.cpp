#include "heatcorr/curriculum.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "heatcorr/log.hpp"
#include "heatcorr/spectral.hpp"

namespace heatcorr {
namespace {

std::vector<Index> every_vertex(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

const Matrix& geodesic_matrix(const ShapeBundle& bundle) {
  if (bundle.supervisor.kind != SupervisorKind::geodesic || bundle.supervisor.matrix.size() == 0) {
    throw Error(ErrorCategory::validation, "geodesic schedule needs the geodesic matrix in the shape bundle");
  }
  return bundle.supervisor.matrix;
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::fixed_heat: return "fixed_heat";
    case ScheduleKind::decayed_heat: return "decayed_heat";
    case ScheduleKind::geodesic: return "geodesic";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
  if (text == "fixed_heat") return ScheduleKind::fixed_heat;
  if (text == "decayed_heat") return ScheduleKind::decayed_heat;
  if (text == "geodesic") return ScheduleKind::geodesic;
  throw Error(ErrorCategory::config,
              "unknown schedule kind '" + text + "' (expected fixed_heat, decayed_heat or geodesic)");
}

Schedule Schedule::fixed(double t, std::int64_t total_iterations) {
  Schedule s{ScheduleKind::fixed_heat, {{0, t}}, total_iterations};
  s.validate();
  return s;
}

Schedule Schedule::decayed(std::vector<Stage> stages, std::int64_t total_iterations) {
  Schedule s{ScheduleKind::decayed_heat, std::move(stages), total_iterations};
  s.validate();
  return s;
}

Schedule Schedule::geodesic(std::int64_t total_iterations) {
  Schedule s{ScheduleKind::geodesic, {{0, 0.0}}, total_iterations};
  s.validate();
  return s;
}

void Schedule::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCategory::config, "schedule: " + msg); };
  if (total_iterations < 1) fail("total_iterations must be >= 1");
  if (stages.empty()) fail("at least one stage is required");
  if (stages.front().start_iteration != 0) fail("the first stage must start at iteration 0");
  for (std::size_t i = 1; i < stages.size(); ++i) {
    if (stages[i].start_iteration <= stages[i - 1].start_iteration) {
      fail("stage start iterations must be strictly increasing");
    }
    if (stages[i].start_iteration >= total_iterations) {
      std::ostringstream msg;
      msg << "stage " << i << " starts at " << stages[i].start_iteration << ", beyond total_iterations "
          << total_iterations;
      fail(msg.str());
    }
  }
  if (kind == ScheduleKind::geodesic) {
    if (stages.size() != 1) fail("geodesic schedules have exactly one stage");
    return;
  }
  for (const auto& s : stages) {
    if (!(s.time > 0.0) || !std::isfinite(s.time)) fail("diffusion times must be positive and finite");
  }
  if (kind == ScheduleKind::fixed_heat && stages.size() != 1) fail("fixed_heat schedules have exactly one stage");
  if (kind == ScheduleKind::decayed_heat) {
    for (std::size_t i = 1; i < stages.size(); ++i) {
      if (!(stages[i].time < stages[i - 1].time)) fail("decayed_heat times must strictly decrease");
    }
  }
}

std::size_t Schedule::stage_at(std::int64_t iteration) const {
  if (iteration < 0 || iteration >= total_iterations) {
    throw Error(ErrorCategory::usage, "iteration " + std::to_string(iteration) + " outside [0, " +
                                          std::to_string(total_iterations) + ")");
  }
  std::size_t s = 0;
  while (s + 1 < stages.size() && stages[s + 1].start_iteration <= iteration) ++s;
  return s;
}

SupervisorKernel kernel_at(const Schedule& schedule, std::int64_t iteration, const ShapeBundle& bundle) {
  const std::size_t stage = schedule.stage_at(iteration);
  if (schedule.uses_geodesics()) return {geodesic_matrix(bundle), SupervisorKind::geodesic, 0.0};
  const double t = schedule.stages[stage].time;
  return SupervisorKernel::heat(heat_kernel(bundle.basis, t).values, t);
}

KernelCache::KernelCache(Schedule schedule) : schedule_(std::move(schedule)) { schedule_.validate(); }

const Matrix& KernelCache::get(std::size_t stage, std::size_t shape_id, const ShapeBundle& bundle) {
  if (schedule_.uses_geodesics()) return geodesic_matrix(bundle);
  const auto key = std::make_pair(stage, shape_id);
  auto it = kernels_.find(key);
  if (it != kernels_.end()) return it->second;
  const auto start = std::chrono::steady_clock::now();
  Matrix k = heat_kernel(bundle.basis, schedule_.stages[stage].time).values;
  seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++computed_;
  return kernels_.emplace(key, std::move(k)).first->second;
}

const Matrix& KernelCache::kernel_at(std::int64_t iteration, std::size_t shape_id, const ShapeBundle& bundle) {
  const std::size_t stage = schedule_.stage_at(iteration);
  if (stage != current_stage_) {
    log::debug("curriculum: entering stage " + std::to_string(stage) + " at iteration " + std::to_string(iteration));
    std::erase_if(kernels_, [stage](const auto& entry) {
      return entry.first.first != 0 && entry.first.first != stage;
    });
    current_stage_ = stage;
  }
  return get(stage, shape_id, bundle);
}

const Matrix& KernelCache::initial_kernel(std::size_t shape_id, const ShapeBundle& bundle) {
  return get(0, shape_id, bundle);
}

double validation_loss(const NetworkParams& params, const std::vector<ShapePair>& pairs,
                       const std::vector<ShapeBundle>& shapes, KernelCache& kernels, const LossConfig& config) {
  if (pairs.empty()) throw Error(ErrorCategory::validation, "validation set is empty");
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.source >= shapes.size() || p.target >= shapes.size()) {
      throw Error(ErrorCategory::validation, "validation pair refers to a missing shape");
    }
    const ShapeBundle& s = shapes[p.source];
    const ShapeBundle& t = shapes[p.target];
    const Matrix& ks = kernels.initial_kernel(p.source, s);
    const Matrix& kt = kernels.initial_kernel(p.target, t);
    total += forward_pair(params, s, t, ks, kt, config, every_vertex(s.n_vertices()), every_vertex(t.n_vertices()))
                 .loss;
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace heatcorr
