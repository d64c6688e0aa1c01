#pragma once

// Run configuration: a sectioned key/value text file whose values are JSON
// literals, e.g.
//
//   [schedule]
//   kind = "decayed_heat"
//   stages = [[0, 0.1], [5000, 0.01]]
//
// Keys may also be written fully qualified (`schedule.kind = ...`).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "heatcorr/curriculum.hpp"
#include "heatcorr/descriptor.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

struct TestPair {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path ground_truth;  // empty: identity map
};

enum class DescriptorSource { shot, external };

struct RunConfig {
  // data
  std::vector<std::filesystem::path> train_meshes;
  std::vector<std::filesystem::path> val_meshes;
  std::vector<TestPair> test_pairs;

  // spectral
  Index basis_size = 150;

  // descriptor
  DescriptorSource descriptor_source = DescriptorSource::shot;
  ShotConfig shot;
  std::filesystem::path external_descriptor_dir;

  // network / optimizer
  int layers = 7;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double ridge = 1e-6;

  // schedule; empty stages on a heat schedule means "pick times automatically"
  ScheduleKind schedule_kind = ScheduleKind::decayed_heat;
  std::vector<Stage> stages;
  std::int64_t total_iterations = 10000;

  // training
  Index subsample = 0;  // 0: all vertices up to kSubsampleAutoLimit, else kSubsampleAutoSize
  std::int64_t validation_every = 250;
  std::int64_t checkpoint_every = 1000;
  Index max_train_vertices = 10000;
  Index time_samples = 100;  // vertices sampled by automatic time selection

  // runtime
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "out";
  unsigned threads = 1;

  /// Normalized JSON rendering of every setting, stored in the manifest.
  std::string snapshot() const;
  /// Range checks; throws config errors. With `check_paths`, input files must exist.
  void validate(bool check_paths = true) const;
};

inline constexpr Index kSubsampleAutoLimit = 3500;
inline constexpr Index kSubsampleAutoSize = 1500;

Index effective_subsample(const RunConfig& config, Index n_vertices);

/// Parses config text. Relative paths resolve against `base_dir`. `overrides`
/// are "section.key=value" strings applied after the file.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace heatcorr
