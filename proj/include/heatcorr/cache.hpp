#pragma once

// On-disk cache of per-mesh artifacts (spectral basis, descriptors and, when
// a geodesic supervisor is requested, the all-pairs distance matrix). Every
// entry stores the content hash of the mesh file it was derived from; a hash
// mismatch or an unreadable file triggers recomputation.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "heatcorr/config.hpp"
#include "heatcorr/corrnet.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

struct CacheSettings {
  std::filesystem::path dir;
  Index basis_size = 150;
  DescriptorSource descriptor_source = DescriptorSource::shot;
  ShotConfig shot;
  std::filesystem::path external_descriptor_dir;
  bool geodesics = false;
  unsigned threads = 1;
  double lock_timeout_seconds = 600.0;
};

CacheSettings cache_settings(const RunConfig& config, bool geodesics);

struct CacheReport {
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::size_t repaired = 0;  // unreadable entries that were recomputed

  std::size_t recomputed() const { return computed + repaired; }
  CacheReport& operator+=(const CacheReport& other);
};

struct CachePaths {
  std::filesystem::path spectral, descriptors, geodesics;
};

/// Entry names are `<stem>-<hash of absolute path>` plus a suffix that encodes
/// the settings, so two meshes with the same stem never collide.
CachePaths cache_paths(const std::filesystem::path& mesh_path, const CacheSettings& settings);

/// Loads a mesh and everything derived from it, reading or filling the cache.
/// The returned bundle holds the unit-area mesh; its supervisor carries the
/// geodesic matrix only when `settings.geodesics` is set.
ShapeBundle load_shape(const std::filesystem::path& mesh_path, const CacheSettings& settings,
                       CacheReport* report = nullptr);

/// Fills the cache for `meshes` in parallel. Duplicates are processed once.
/// Failures are rethrown with the mesh name prepended.
CacheReport precompute_shapes(const std::vector<std::filesystem::path>& meshes, const CacheSettings& settings);

/// External descriptors live next to each other as `<dir>/<mesh stem>.txt`.
std::filesystem::path external_descriptor_path(const std::filesystem::path& dir, const std::filesystem::path& mesh);

}  // namespace heatcorr
