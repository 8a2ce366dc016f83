#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "coherence/flow.hpp"

namespace coherence {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Triangulation of one time slice. On a torus each triangle corner carries an
/// integer image shift, so corner c of triangle t sits at
/// nodes[k] + (shift.x * lx, shift.y * ly) and the triangle is realized
/// without wraparound.
struct SliceMesh {
  DomainSpec domain;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<std::array<int, 2>, 3>> shifts;  // empty on a box

  Vec2 corner(std::size_t tri, int c) const;
  double signed_area(std::size_t tri) const;
  double total_area() const;
};

struct SliceOperators {
  SparseMatrix mass;       // symmetric positive definite
  SparseMatrix stiffness;  // symmetric negative semidefinite, annihilates constants
};

/// Delaunay mesh of a point cloud. Torus clouds are tiled 3 x 3; of each
/// periodic triangle the copy anchored at its smallest node index in the
/// central cell is kept.
/// Throws DegenerateCloud (collinear or duplicate points) and MeshGapError
/// (torus triangles fail to tile the cell exactly once).
SliceMesh triangulate_slice(std::span<const Vec2> points, const DomainSpec& domain);

/// P1 mass and stiffness matrices. Throws ZeroAreaTriangle.
SliceOperators assemble_slice(const SliceMesh& mesh);

/// Fresh mesh and operators per slice; node k is always trajectory k.
/// Meshing errors are rethrown with the slice index in the message.
std::vector<SliceOperators> assemble_all_slices(const TrajectoryEnsemble& ensemble,
                                                std::size_t threads = 0);

enum class DynamicMass { time_averaged, initial };

struct DynamicPencil {
  SparseMatrix stiffness;  // trapezoidal time average of the slice stiffness matrices
  SparseMatrix mass;
};

/// Dynamic Laplacian pencil. The mass matrix is the first slice's by default
/// (exact for volume-preserving flows); DynamicMass::time_averaged averages
/// the slice masses with the same trapezoid weights as the stiffness.
DynamicPencil assemble_dynamic_laplacian(std::span<const SliceOperators> slices,
                                         std::span<const double> times,
                                         DynamicMass mass = DynamicMass::initial);

/// Sparse triplet text files, one per slice, plus index.json.
void save_slice_cache(const std::filesystem::path& dir, std::span<const SliceOperators> slices,
                      std::uint64_t fingerprint);
/// Returns false when the directory holds no cache for `fingerprint`.
bool load_slice_cache(const std::filesystem::path& dir, std::uint64_t fingerprint,
                      std::vector<SliceOperators>& slices);

/// FNV-1a hash over domain, times and positions of an ensemble.
std::uint64_t ensemble_fingerprint(const TrajectoryEnsemble& ensemble);

}  // namespace coherence
