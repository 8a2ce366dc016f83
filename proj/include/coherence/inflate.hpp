#pragma once

#include <memory>
#include <span>
#include <vector>

#include "coherence/fem.hpp"

namespace coherence {

/// a-independent parts of the space-time pencil. The stiffness of the
/// inflated operator is a^2 * temporal + spatial.
struct InflatedBase {
  std::size_t num_slices = 0;  // T + 1
  std::size_t num_nodes = 0;   // N
  double tau = 0.0;
  double h = 0.0;
  SparseMatrix temporal;
  SparseMatrix spatial;
  SparseMatrix mass;

  std::size_t dimension() const { return num_slices * num_nodes; }
};

struct InflatedSystem {
  double a = 0.0;
  std::shared_ptr<const InflatedBase> base;
  SparseMatrix D;

  const SparseMatrix& M() const { return base->mass; }
  double tau() const { return base->tau; }
  double h() const { return base->h; }
  std::size_t num_slices() const { return base->num_slices; }
  std::size_t num_nodes() const { return base->num_nodes; }
  std::size_t dimension() const { return base->dimension(); }
  /// Global index of node k in slice i.
  std::size_t index(std::size_t slice, std::size_t node) const {
    return slice * base->num_nodes + node;
  }
};

/// Mass matrices used for every slice of the space-time pencil. For a
/// volume-preserving flow the mass integrals of the pushed-forward hat
/// functions equal those at the initial time, so `initial` uses the first
/// slice's mass throughout; `per_slice` uses each slice's own Delaunay mass,
/// whose nodal weights drift with the remeshing.
enum class SliceMass { initial, per_slice };

/// The per-slice mass matrices a pencil built with `mass` uses; analysis
/// quadrature has to match them.
std::vector<SparseMatrix> slice_masses(std::span<const SliceOperators> slices, SliceMass mass);

/// Throws NonuniformGrid unless consecutive steps agree within 1e-9 relative.
void require_uniform_grid(std::span<const double> times);

/// Block-tridiagonal temporal, spatial and mass matrices for slices on the
/// uniform grid t_i = i tau / T, with the slice matrices interpolated
/// linearly in time.
std::shared_ptr<const InflatedBase> build_inflated_base(std::span<const SliceOperators> slices,
                                                        double tau,
                                                        SliceMass mass = SliceMass::initial);

InflatedSystem inflate(std::shared_ptr<const InflatedBase> base, double a);

InflatedSystem assemble_inflated(std::span<const SliceOperators> slices, double a, double tau,
                                 SliceMass mass = SliceMass::initial);
/// Same, checking that `times` is uniform; tau is its span.
InflatedSystem assemble_inflated(std::span<const SliceOperators> slices, double a,
                                 std::span<const double> times,
                                 SliceMass mass = SliceMass::initial);

/// One system per a, all sharing a single base.
std::vector<InflatedSystem> sweep_a(std::span<const SliceOperators> slices,
                                    std::span<const double> a_values, double tau,
                                    SliceMass mass = SliceMass::initial);

}  // namespace coherence
