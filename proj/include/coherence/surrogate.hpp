#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace coherence {

/// (a^2 / 2) u'' - rho u = nu u on [0, tau] with u'(0) = u'(tau) = 0 and the
/// step rate rho = z on [0, p tau], Z on (p tau, tau].
struct SurrogateProblem {
  double a = 1.0;
  double z = 1.0;
  double Z = 2.0;
  double p = 0.5;  // coherent fraction
  double tau = 1.0;

  /// Throws DomainError unless Z > z > 0, 0 < p < 1, a > 0, tau > 0.
  void validate() const;
  /// Same problem on [0, 1]: a / tau, everything else unchanged.
  SurrogateProblem unit() const;
};

/// Same eigenvalues on [0, tau]: a scales with tau, rates and p stay.
SurrogateProblem rescale_to_tau(const SurrogateProblem& unit_problem, double tau);

/// Poles nu_k* = -z - (a^2 / 2) ((2k + 1) pi / (2 p))^2 of the characteristic
/// function that lie above `lower`, descending. Uses the unit-interval a.
std::vector<double> surrogate_singularities(const SurrogateProblem& problem, double lower);

/// f(nu) = (w_z / w_Z) tanh(w_z p) + tanh(w_Z (1 - p)) with
/// w = sqrt(2 (nu + rate)) / a on the unit interval, evaluated in real form.
/// Defined for nu > -Z. Throws SingularityHit within 1e-12 of a pole and
/// DomainError for nu <= -Z.
double characteristic(const SurrogateProblem& problem, double nu);

struct SurrogateSolution {
  SurrogateProblem problem;
  double nu0 = 0.0;
  double omega_z = 0.0;  // |w_z| at nu0; the profile is a cosine on the coherent part
  double omega_Z = 0.0;  // decay rate on the mixing part
  double alpha = 1.0;    // scale giving max u = 1
  double residual = 0.0;  // |f(nu0)|
  /// Further roots of f in (-Z, nu0), one per pole interval, descending.
  std::vector<double> lower;

  /// Profile at t in [0, tau].
  double operator()(double t) const;
  /// Its derivative.
  double derivative(double t) const;
};

/// Dominant eigenvalue by bisection on (max(nu_0*, -Z), -z) down to 1e-12
/// absolute, then secant steps while |f| decreases. Throws BracketFailure.
SurrogateSolution solve_dominant(const SurrogateProblem& problem, double tol = 1e-12);

struct FdSpectrum {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // nodal values, columns
  Eigen::VectorXd nodes;
};

/// Central differences on n uniform nodes of [0, tau] with mirror ghost
/// nodes. rho at a node is its average over the node's dual cell, which
/// keeps the scheme second order across the step. Without `vectors` the
/// eigenvector matrix stays empty.
FdSpectrum solve_fd(const SurrogateProblem& problem, std::size_t n_nodes, bool vectors = true);

struct ProfileFit {
  double p_hat = 0.0;  // changepoint in rescaled time [0, 1]
  std::size_t split = 0;  // last index of the high-norm segment
  double cosine_slope = 0.0;  // of arcsin(u / max u) against rescaled time
  double decay_rate = 0.0;    // minus the slope of log u
  double r2_cosine = 0.0;
  double r2_decay = 0.0;
  double residual = 0.0;  // summed squares on the arcsin scale at the split
};

/// Changepoint fit: a line through arcsin(u / max u) on the leading segment
/// and a u^2-weighted line through log u on the trailing one, split where
/// the summed squared residuals of both, measured on the arcsin scale, are
/// smallest. Throws FitDegenerate for constant u or when no split leaves
/// three points on both sides.
ProfileFit fit_profile(std::span<const double> times, std::span<const double> u);

/// t, u(t) on `samples` points plus nu0 in the header comment.
void write_surrogate_csv(const std::filesystem::path& path, const SurrogateSolution& solution,
                         std::size_t samples);

}  // namespace coherence
