#include "coherence/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "coherence/errors.hpp"
#include "coherence/io.hpp"

namespace coherence {

using std::numbers::pi;

void SurrogateProblem::validate() const {
  if (!(z > 0.0 && Z > z)) throw DomainError("need Z > z > 0");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("need 0 < p < 1");
  if (!(a > 0.0)) throw DomainError("a must be positive");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
}

SurrogateProblem SurrogateProblem::unit() const {
  SurrogateProblem out = *this;
  out.a = a / tau;
  out.tau = 1.0;
  return out;
}

SurrogateProblem rescale_to_tau(const SurrogateProblem& unit_problem, double tau) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  SurrogateProblem out = unit_problem.unit();
  out.a *= tau;
  out.tau = tau;
  return out;
}

namespace {

double pole(const SurrogateProblem& u, int k) {
  const double x = (2 * k + 1) * pi / (2 * u.p);
  return -u.z - 0.5 * u.a * u.a * x * x;
}

// Root of f on (lo, hi) with f(lo) < 0 < f(hi).
template <class F>
double bisect(F f, double lo, double hi, double tol) {
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// f just inside an open interval end with the given sign, approaching the
// end from 1e-3 down to 1e-15 times the interval width.
template <class F>
bool sample_near(F f, double end, double inward, double scale, double sign, double& at,
                 double& value) {
  for (double d = 1e-3; d >= 1e-15; d *= 0.1) {
    at = end + inward * d * scale;
    if (at == end) break;
    try {
      value = f(at);
    } catch (const SingularityHit&) {
      continue;
    }
    if (std::isfinite(value) && value * sign > 0.0) return true;
  }
  return false;
}

}  // namespace

std::vector<double> surrogate_singularities(const SurrogateProblem& problem, double lower) {
  problem.validate();
  const auto u = problem.unit();
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double s = pole(u, k);
    if (s <= lower) break;
    out.push_back(s);
  }
  return out;
}

double characteristic(const SurrogateProblem& problem, double nu) {
  problem.validate();
  const auto u = problem.unit();
  if (!(nu > -u.Z)) throw DomainError("characteristic is evaluated for nu > -Z only");
  const double a2 = u.a * u.a;
  const double wZ = std::sqrt(2.0 * (nu + u.Z) / a2);
  const double tail = std::tanh(wZ * (1.0 - u.p));
  const double s = nu + u.z;
  if (s >= 0.0) {
    const double wz = std::sqrt(2.0 * s / a2);
    return wz / wZ * std::tanh(wz * u.p) + tail;
  }
  const double wz = std::sqrt(-2.0 * s / a2);
  const int k = static_cast<int>(std::lround(wz * u.p / pi - 0.5));
  if (k >= 0 && std::abs(nu - pole(u, k)) < 1e-12)
    throw SingularityHit("nu = " + io::format_double(nu) + " is a pole of the characteristic");
  return tail - wz / wZ * std::tan(wz * u.p);
}

double SurrogateSolution::operator()(double t) const {
  const double s = t / problem.tau;
  const double p = problem.p;
  if (s <= p) return alpha * std::cos(omega_z * s);
  return alpha * std::cos(omega_z * p) / std::cosh(omega_Z * (1.0 - p)) *
         std::cosh(omega_Z * (1.0 - s));
}

double SurrogateSolution::derivative(double t) const {
  const double s = t / problem.tau;
  const double p = problem.p;
  double d;
  if (s <= p)
    d = -alpha * omega_z * std::sin(omega_z * s);
  else
    d = -alpha * std::cos(omega_z * p) / std::cosh(omega_Z * (1.0 - p)) * omega_Z *
        std::sinh(omega_Z * (1.0 - s));
  return d / problem.tau;
}

SurrogateSolution solve_dominant(const SurrogateProblem& problem, double tol) {
  problem.validate();
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  const auto u = problem.unit();
  const auto f = [&](double nu) { return characteristic(problem, nu); };
  const double first_pole = pole(u, 0);
  const double lo_end = std::max(first_pole, -u.Z);
  double lo, flo, hi = -u.z, fhi = f(hi);
  if (!(fhi > 0.0)) throw BracketFailure("characteristic is not positive at -z");
  if (!sample_near(f, lo_end, 1.0, hi - lo_end, -1.0, lo, flo))
    throw BracketFailure("characteristic is not negative at the left end of the bracket");

  double nu = bisect(f, lo, hi, tol);
  // Secant polish between the final bracket ends while |f| keeps dropping.
  double x0 = nu - tol, x1 = nu;
  double f0 = f(x0), f1 = f(x1);
  for (int it = 0; it < 8 && f1 != 0.0 && f1 != f0; ++it) {
    const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    if (!(x2 > lo && x2 < hi)) break;
    const double f2 = f(x2);
    if (!(std::abs(f2) < std::abs(f1))) break;
    x0 = x1, f0 = f1, x1 = x2, f1 = f2;
  }
  nu = x1;

  SurrogateSolution out;
  out.problem = problem;
  out.nu0 = nu;
  out.residual = std::abs(f1);
  out.omega_z = std::sqrt(-2.0 * (nu + u.z)) / u.a;
  out.omega_Z = std::sqrt(2.0 * (nu + u.Z)) / u.a;
  // cos on [0, p] stays positive because nu0 lies above the first pole; the
  // maximum sits at t = 0.
  out.alpha = 1.0;

  const auto poles = surrogate_singularities(problem, -u.Z);
  for (std::size_t k = 0; k < poles.size(); ++k) {
    const double right = poles[k];
    const double left = k + 1 < poles.size() ? poles[k + 1] : -u.Z;
    double a_at, fa, b_at, fb;
    if (!sample_near(f, left, 1.0, right - left, -1.0, a_at, fa)) continue;
    if (!sample_near(f, right, -1.0, right - left, 1.0, b_at, fb)) continue;
    out.lower.push_back(bisect(f, a_at, b_at, tol));
  }
  return out;
}

FdSpectrum solve_fd(const SurrogateProblem& problem, std::size_t n_nodes, bool vectors) {
  // Z = z is allowed here: the constant-rate problem is the check case.
  if (!(problem.z > 0.0 && problem.Z >= problem.z)) throw DomainError("need Z >= z > 0");
  if (!(problem.p > 0.0 && problem.p < 1.0)) throw DomainError("need 0 < p < 1");
  if (!(problem.a > 0.0 && problem.tau > 0.0)) throw DomainError("a and tau must be positive");
  if (n_nodes < 10) throw DomainError("at least 10 nodes required");
  const std::size_t n = n_nodes;
  const double tau = problem.tau;
  const double h = tau / static_cast<double>(n - 1);
  const double step = problem.p * tau;
  const double c = 0.5 * problem.a * problem.a / (h * h);

  FdSpectrum out;
  out.nodes = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), 0.0, tau);
  Eigen::VectorXd diag(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(n - 1));
  for (std::size_t j = 0; j < n; ++j) {
    const double x = out.nodes[static_cast<Eigen::Index>(j)];
    const double l = std::max(0.0, x - 0.5 * h), r = std::min(tau, x + 0.5 * h);
    const double coherent = std::clamp(step, l, r) - l;
    const double rho = (problem.z * coherent + problem.Z * (r - l - coherent)) / (r - l);
    diag[static_cast<Eigen::Index>(j)] = -2.0 * c - rho;
  }
  sub.setConstant(c);
  // Mirror closure gives 2c towards the interior in the end rows; scaling
  // with the half weights of the end nodes makes the matrix symmetric.
  sub[0] = sub[static_cast<Eigen::Index>(n - 2)] = std::sqrt(2.0) * c;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub,
                                vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw DomainError("tridiagonal eigensolve failed");
  out.eigenvalues = solver.eigenvalues().reverse();
  if (!vectors) return out;
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  out.eigenvectors.row(0) *= std::sqrt(2.0);
  out.eigenvectors.row(static_cast<Eigen::Index>(n - 1)) *= std::sqrt(2.0);
  return out;
}

namespace {

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double sse = 0.0;
  double r2 = 1.0;
};

// Weighted least-squares line; empty weights mean all ones.
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> w = {}) {
  const auto weight = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
  double sw = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    sw += weight(i), mx += weight(i) * x[i], my += weight(i) * y[i];
  mx /= sw, my /= sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += weight(i) * (x[i] - mx) * (x[i] - mx);
    sxy += weight(i) * (x[i] - mx) * (y[i] - my);
    syy += weight(i) * (y[i] - my) * (y[i] - my);
  }
  LineFit out;
  out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  out.intercept = my - out.slope * mx;
  out.sse = std::max(0.0, syy - out.slope * sxy);
  out.r2 = syy > 0.0 ? 1.0 - out.sse / syy : 1.0;
  return out;
}

}  // namespace

ProfileFit fit_profile(std::span<const double> times, std::span<const double> u) {
  const std::size_t n = u.size();
  if (times.size() != n) throw DomainError("one time per profile value required");
  if (n < 6) throw FitDegenerate("need at least three points on each side of the split");
  const double top = *std::max_element(u.begin(), u.end());
  const double bottom = *std::min_element(u.begin(), u.end());
  if (!(top > 0.0)) throw FitDegenerate("profile has no positive value");
  if (top - bottom <= 1e-12 * top) throw FitDegenerate("constant profile has no changepoint");

  const double span = times.back() - times.front();
  std::vector<double> s(n), arc(n), lg(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = (times[i] - times.front()) / span;
    arc[i] = std::asin(std::clamp(u[i] / top, 0.0, 1.0));
    lg[i] = u[i] > 0.0 ? std::log(u[i]) : std::numeric_limits<double>::quiet_NaN();
    // Weights u^2 make the log fit follow the relative error of the large
    // values rather than the flattening of the tiny ones near the end.
    w[i] = (u[i] / top) * (u[i] / top);
  }

  ProfileFit best;
  best.residual = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t c = 2; c + 3 < n; ++c) {
    const std::span<const double> head_s(s.data(), c + 1), tail_s(s.data() + c + 1, n - c - 1);
    if (std::any_of(lg.begin() + static_cast<std::ptrdiff_t>(c + 1), lg.end(),
                    [](double v) { return std::isnan(v); }))
      continue;
    const auto head = fit_line(head_s, std::span<const double>(arc.data(), c + 1));
    const auto tail = fit_line(tail_s, std::span<const double>(lg.data() + c + 1, n - c - 1),
                               std::span<const double>(w.data() + c + 1, n - c - 1));
    // Both segments are scored on the arcsin scale: on the log scale the
    // tiny tail values near a Neumann end would dominate the choice.
    double total = head.sse;
    for (std::size_t i = c + 1; i < n; ++i) {
      const double model = std::asin(std::min(1.0, std::exp(tail.intercept + tail.slope * s[i]) / top));
      total += (model - arc[i]) * (model - arc[i]);
    }
    if (total < best.residual) {
      found = true;
      best.residual = total;
      best.split = c;
      best.p_hat = 0.5 * (s[c] + s[c + 1]);
      best.cosine_slope = head.slope;
      best.decay_rate = -tail.slope;
      best.r2_cosine = head.r2;
      best.r2_decay = tail.r2;
    }
  }
  if (!found) throw FitDegenerate("no split leaves a positive trailing segment");
  return best;
}

void write_surrogate_csv(const std::filesystem::path& path, const SurrogateSolution& solution,
                         std::size_t samples) {
  if (samples < 2) throw DomainError("at least two samples required");
  std::ostringstream out;
  out << "# nu0=" << io::format_double(solution.nu0) << '\n' << "t,u\n";
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = solution.problem.tau * static_cast<double>(i) /
                     static_cast<double>(samples - 1);
    out << io::format_double(t) << ',' << io::format_double(solution(t)) << '\n';
  }
  io::write_text(path, out.str());
}

}  // namespace coherence
