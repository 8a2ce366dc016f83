#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coherence/eigs.hpp"
#include "coherence/fem.hpp"
#include "coherence/flow.hpp"

namespace coherence {

enum class ModeLabel { spatial, temporal, ambiguous };
std::string to_string(ModeLabel label);

struct ClassifyThresholds {
  double spatial = 0.1;   // variance below: spatial
  double temporal = 0.5;  // variance above: temporal
};

/// Space-time quadrature of a discretized pencil: the slice times and the
/// slice mass matrices the pencil was built from.
struct SliceQuadrature {
  std::vector<double> times;
  std::vector<SparseMatrix> masses;

  double tau() const { return times.back() - times.front(); }
  /// Trapezoid weight of slice i.
  double weight(std::size_t i) const;
};

/// One eigenfunction normalized to squared space-time norm tau * l(M).
struct EigenMode {
  double eigenvalue = 0.0;
  std::size_t num_slices = 0;
  std::size_t num_nodes = 0;
  Eigen::VectorXd values;           // slice-major, index i * N + k
  std::vector<double> slice_means;  // s(t_i) = 1^T M_i w_i / l(M)
  std::vector<double> slice_norms;  // u(t_i) = w_i^T M_i w_i
  double slice_mean_variance = 0.0;
  double area = 0.0;  // l(M)
  ModeLabel label = ModeLabel::ambiguous;

  Eigen::Map<const Eigen::VectorXd> slice(std::size_t i) const {
    return {values.data() + static_cast<Eigen::Index>(i * num_nodes),
            static_cast<Eigen::Index>(num_nodes)};
  }
};

/// Rescales `w` so that w^T M w = tau l(M) with the space-time mass `mass`
/// and recomputes slice means, slice norms and the trapezoid variance of
/// the slice means. The label is left for classify(). Throws ZeroMode.
EigenMode normalize_mode(const Eigen::VectorXd& w, double eigenvalue, const SparseMatrix& mass,
                         const SliceQuadrature& quadrature);

ModeLabel classify(const EigenMode& mode, const ClassifyThresholds& thresholds = {});

/// Normalizes and classifies every pair of `spectrum`, writing the labels
/// back into spectrum.labels.
std::vector<EigenMode> analyze_spectrum(SpectrumResult& spectrum, const SparseMatrix& mass,
                                        const SliceQuadrature& quadrature,
                                        const ClassifyThresholds& thresholds = {});

/// Indices of the modes with the given label, in spectrum order.
std::vector<std::size_t> indices_with_label(const std::vector<EigenMode>& modes, ModeLabel label);

/// Lower bound for the temporal diffusion strength: 2 tau / l on a torus,
/// tau / l with Neumann boundaries, l the longest side.
double suggest_a(const DomainSpec& domain, double tau);

/// Space-time box [tau1, tau2] x A.
struct CheegerBox {
  double area = 0.0;         // l(A)
  double domain_area = 0.0;  // l(M)
  double dynamic_cheeger = 0.0;  // h^D of the boundary of A over [tau1, tau2]
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau = 0.0;  // full duration
  /// One temporal face lies on the boundary of the time interval and does
  /// not count towards the boundary volume.
  bool touches_temporal_face = false;
};

/// Cheeger ratio of the box boundary: c a / (tau2 - tau1) + h^D with c = 2,
/// or c = 1 when a temporal face touches the boundary. Throws
/// VolumeTooLarge when (tau2 - tau1) l(A) > tau l(M) / 2.
double cheeger_box(const CheegerBox& box, double a);

/// Cheeger ratio of the positive set of the k-th temporal eigenfunction.
double temporal_cheeger(int k, double a, double tau);

/// Spectral position k at which a box with dynamic Cheeger constant h^D over
/// [tau1, tau2] competes with the k-th temporal eigenfunction, and the
/// inverse. With a touching face the duration counts twice.
double predict_spectral_position(double dynamic_cheeger, double tau1, double tau2, double tau,
                                 double a, bool touches_temporal_face);
/// Throws InvalidK when k <= tau / duration.
double predict_a(double dynamic_cheeger, double tau1, double tau2, double tau, double k,
                 bool touches_temporal_face);

enum class Regime { coherent, mixing, neutral, undefined };
std::string to_string(Regime regime);

struct RayleighProfiles {
  std::vector<double> rho_temp;
  std::vector<double> rho_spat;
  /// Lambda + a^2 rho_temp + rho_spat; negative where the local decay is
  /// below the average.
  std::vector<double> local_decay;
  std::vector<Regime> regimes;
  /// Trapezoid average of (a^2 rho_temp + rho_spat) weighted by u, taken
  /// over all slices; approximates -Lambda.
  double average_decay = 0.0;
  std::size_t underflow_slices = 0;
};

/// Temporal and spatial Rayleigh coefficients per slice. The time derivative
/// uses centered differences inside and one-sided ones at the ends. Slices
/// with u < 1e-12 max u are labeled undefined.
RayleighProfiles rayleigh_profiles(const EigenMode& mode, std::span<const SliceOperators> slices,
                                   const SliceQuadrature& quadrature, double a,
                                   double threshold = 0.0);

struct SebaOptions {
  std::size_t max_iter = 5000;
  double tol = 1e-14;
  /// Soft threshold; values <= 0 select 0.99 / sqrt(rows).
  double mu = 0.0;
};

struct SebaBasis {
  Eigen::MatrixXd sparse;   // S_k, columns scaled to unit maximum
  Eigen::MatrixXd rotated;  // orthonormalized inputs times R^T; spans the inputs
  Eigen::MatrixXd rotation;  // R
  Eigen::VectorXd s_max;     // pointwise maximum over the S_k
  std::vector<double> zero_fraction;  // per column
  std::vector<double> min_over_max;   // per column; negativity diagnostic
  double orthogonality_error = 0.0;   // ||R^T R - I||_F
  std::size_t iterations = 0;
  double last_increment = 0.0;
  bool converged = false;
};

/// Sparse rotation of the columns of `modes` (at least two): alternates soft
/// thresholding of V R^T with the polar factor of S^T V until R changes by
/// less than tol. Not converging sets converged = false and returns the
/// last iterate.
SebaBasis seba(const Eigen::MatrixXd& modes, const SebaOptions& options = {});

/// (position at the target time, value at t0) for every trajectory.
std::vector<std::pair<Vec2, double>> pushforward_slice(std::span<const double> field,
                                                       const TrajectoryEnsemble& ensemble,
                                                       std::size_t target);

// CSV exports.
void write_modes_csv(const std::filesystem::path& path, const std::vector<EigenMode>& modes);
/// t, then u_k(t) for each mode.
void write_slicenorms_csv(const std::filesystem::path& path, const std::vector<EigenMode>& modes,
                          std::span<const double> times);
/// t, then the regime label per profile.
void write_regimes_csv(const std::filesystem::path& path,
                       const std::vector<RayleighProfiles>& profiles,
                       const std::vector<std::size_t>& mode_indices,
                       std::span<const double> times);
/// t, then arcsin(u / max u) and log(u) per mode.
void write_profile_transforms_csv(const std::filesystem::path& path,
                                  const std::vector<EigenMode>& modes,
                                  const std::vector<std::size_t>& mode_indices,
                                  std::span<const double> times);

}  // namespace coherence
