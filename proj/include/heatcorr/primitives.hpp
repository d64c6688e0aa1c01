#pragma once

// Procedural meshes for tests, benchmarks and demos.

#include <cstdint>

#include "heatcorr/mesh.hpp"

namespace heatcorr::primitives {

/// Subdivided icosahedron on the unit sphere; 10 * 4^level + 2 vertices.
TriMesh icosphere(int level);

/// Closed torus on a (rings x segments) grid; rings * segments vertices.
TriMesh torus(int rings, int segments, double major_radius = 1.0, double minor_radius = 0.4);

/// Regular grid triangulation of the unit square in the z = 0 plane.
TriMesh grid(int nx, int ny);

/// Displaces vertices along their normals by a smooth random field (sum of
/// `bumps` Gaussian blobs). Breaks the symmetries of analytic shapes.
TriMesh add_bumps(const TriMesh& mesh, int bumps, double amplitude, double width, std::uint64_t seed);

/// Torus with one ring vertex count close to `n`: a bumpy, asymmetric desk-scale shape.
TriMesh bumpy_torus(int target_vertices, std::uint64_t seed = 7);

}  // namespace heatcorr::primitives
