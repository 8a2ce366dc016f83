#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coherence/fem.hpp"
#include "coherence/inflate.hpp"

namespace coherence {

struct EigsOptions {
  std::size_t count = 20;  // K
  double tol = 1e-6;
  /// Krylov subspace size; 0 picks max(2K + 10, K + 20).
  std::size_t subspace = 0;
  std::size_t max_restarts = 1000;
  std::uint64_t seed = 20240601;
  /// Shift for the inversion. Values <= 0 select 1e-6 trace(-D) / trace(M).
  double shift = 0.0;
  /// Extra restarted runs, each deflated against the pairs found so far,
  /// that look for copies of repeated eigenvalues a single Krylov space
  /// cannot see.
  std::size_t max_probes = 10;
  /// Progress lines on stderr, one per restart.
  bool verbose = false;
};

struct SpectrumResult {
  std::vector<double> eigenvalues;  // algebraically descending
  Eigen::MatrixXd eigenvectors;     // columns, M-orthonormal
  std::vector<double> residuals;    // ||D w - lambda M w||_2 with ||w||_M = 1
  /// Rounding-error size of each residual, gamma ||(|D| + |lambda| |M|) |w|||_2
  /// with gamma = (max row nonzeros + 2) eps: residuals cannot be certified
  /// below it in double precision.
  std::vector<double> residual_floors;
  std::vector<std::string> labels;  // filled by the analysis step

  // Diagnostics.
  double shift = 0.0;
  double tolerance = 0.0;
  std::size_t operator_applications = 0;
  std::size_t restarts = 0;
  std::size_t probes = 0;
  std::size_t factorization_attempts = 0;
  bool dense = false;

  std::size_t size() const { return eigenvalues.size(); }
};

/// K algebraically largest eigenpairs of the symmetric pencil D w = lambda M w
/// (D negative semidefinite, M positive definite) by shift-invert
/// Krylov-Schur in the M inner product. Small problems are solved densely.
/// Throws ConvergenceFailure and FactorizationError.
SpectrumResult solve_pencil(const SparseMatrix& D, const SparseMatrix& M,
                            const EigsOptions& options = {});
SpectrumResult solve_pencil(const InflatedSystem& system, const EigsOptions& options = {});
SpectrumResult solve_pencil(const DynamicPencil& pencil, const EigsOptions& options = {});

/// Dense generalized solve of the full pencil; the reference for tests.
SpectrumResult solve_pencil_dense(const SparseMatrix& D, const SparseMatrix& M,
                                  std::size_t count);

/// CSV with columns k, lambda, residual, label (k starts at 1).
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& result);

struct EigBoundsOptions {
  /// Allowed undershoot of the spatial eigenvalues below the dynamic ones,
  /// relative to |lambda^D_k|.
  double slack = 0.05;
  /// Allowed increase between consecutive a (absolute). Also added to the
  /// bound and limit allowances, which are zero for lambda^D_1 = 0.
  double monotonicity_tol = 1e-6;
  /// Allowed relative distance between the spatial eigenvalue at the
  /// largest a and the dynamic eigenvalue.
  double limit_tol = 0.1;
};

struct EigBoundsReport {
  struct Row {
    std::size_t k;  // 1-based
    double dynamic;
    std::vector<double> spatial;  // one per a; NaN when missing
    bool lower_bound_ok;
    bool monotone_ok;
    bool limit_ok;
  };
  std::vector<double> a_values;
  std::vector<Row> rows;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the spatial eigenvalues of an a-sweep against the dynamic
/// Laplacian spectrum: lower bound up to slack, nonincreasing in a, and close
/// to the dynamic value at the largest a. `spatial[j]` lists the spatial
/// eigenvalues (descending, constant mode first) for a_values[j], which must
/// be increasing.
EigBoundsReport verify_eigbounds(const std::vector<double>& a_values,
                                 const std::vector<std::vector<double>>& spatial,
                                 const std::vector<double>& dynamic,
                                 const EigBoundsOptions& options = {});

}  // namespace coherence
