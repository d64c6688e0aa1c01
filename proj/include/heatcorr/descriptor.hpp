#pragma once

// SHOT (signature of histograms of orientations) point descriptors.

#include <cstdint>
#include <filesystem>

#include "heatcorr/mesh.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

enum class DescriptorKind : std::uint8_t { shot = 0, external = 1 };

struct DescriptorMatrix {
  Matrix values;  // N x D; every entry is exactly representable as float32
  DescriptorKind kind = DescriptorKind::shot;
  ContentHash config_hash = 0;
  /// Vertices whose support sphere held no other vertex (their rows are zero).
  Index empty_neighborhoods = 0;

  Index rows() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

struct ShotConfig {
  int bins = 10;
  /// Support radius as a fraction of sqrt(total area).
  double radius_fraction = 0.05;

  ContentHash hash() const;
};

inline constexpr int kShotSectors = 32;  // 8 azimuth x 2 elevation x 2 radial
inline constexpr Index kShotPaddedDim = 352;

/// Descriptor width: 32 * bins, zero-padded to 352 when bins == 10.
Index shot_dimension(int bins);

DescriptorMatrix compute_shot(const TriMesh& mesh, const ShotConfig& config, unsigned threads = 0);

/// Same computation with an absolute support radius.
DescriptorMatrix compute_shot_with_radius(const TriMesh& mesh, int bins, double radius, unsigned threads = 0);

/// Local reference frame at `center` (rows x, y, z), from the distance-weighted
/// covariance of `neighbors`, with majority-rule sign disambiguation.
Eigen::Matrix3d shot_local_frame(const Vec3& center, const std::vector<Vec3>& neighbors, double radius);

// DESC1 file.
void save_descriptors(const DescriptorMatrix& desc, ContentHash mesh_hash, const std::filesystem::path& path);

struct DescriptorFile {
  DescriptorMatrix descriptors;
  ContentHash mesh_hash = 0;
};

DescriptorFile load_descriptors(const std::filesystem::path& path);

/// Plain-text matrix (one whitespace-separated row per vertex) from an
/// external SHOT implementation; tagged DescriptorKind::external.
DescriptorMatrix load_descriptors_text(const std::filesystem::path& path);

}  // namespace heatcorr
