#include "coherence/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coherence/errors.hpp"
#include "coherence/io.hpp"

namespace coherence {

std::string to_string(ModeLabel label) {
  switch (label) {
    case ModeLabel::spatial: return "spatial";
    case ModeLabel::temporal: return "temporal";
    default: return "ambiguous";
  }
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::coherent: return "coherent";
    case Regime::mixing: return "mixing";
    case Regime::neutral: return "neutral";
    default: return "undefined";
  }
}

double SliceQuadrature::weight(std::size_t i) const {
  double w = 0.0;
  if (i > 0) w += 0.5 * (times[i] - times[i - 1]);
  if (i + 1 < times.size()) w += 0.5 * (times[i + 1] - times[i]);
  return w;
}

EigenMode normalize_mode(const Eigen::VectorXd& w, double eigenvalue, const SparseMatrix& mass,
                         const SliceQuadrature& quadrature) {
  const std::size_t T1 = quadrature.times.size();
  if (T1 < 2 || quadrature.masses.size() != T1)
    throw DomainError("quadrature needs one mass matrix per time, at least two times");
  const auto n = static_cast<std::size_t>(quadrature.masses[0].rows());
  if (static_cast<std::size_t>(w.size()) != T1 * n || mass.rows() != w.size())
    throw DomainError("mode size does not match the space-time grid");

  const double norm2 = w.dot(mass * w);
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw ZeroMode("mode has no mass norm");

  EigenMode m;
  m.eigenvalue = eigenvalue;
  m.num_slices = T1;
  m.num_nodes = n;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  m.area = ones.dot(quadrature.masses[0] * ones);
  const double tau = quadrature.tau();
  m.values = w * std::sqrt(tau * m.area / norm2);

  m.slice_means.resize(T1);
  m.slice_norms.resize(T1);
  for (std::size_t i = 0; i < T1; ++i) {
    const Eigen::VectorXd mw = quadrature.masses[i] * m.slice(i);
    m.slice_means[i] = ones.dot(mw) / m.area;
    m.slice_norms[i] = m.slice(i).dot(mw);
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < T1; ++i) mean += quadrature.weight(i) * m.slice_means[i];
  mean /= tau;
  double var = 0.0;
  for (std::size_t i = 0; i < T1; ++i) {
    const double d = m.slice_means[i] - mean;
    var += quadrature.weight(i) * d * d;
  }
  m.slice_mean_variance = var / tau;
  return m;
}

ModeLabel classify(const EigenMode& mode, const ClassifyThresholds& thresholds) {
  if (mode.slice_mean_variance < thresholds.spatial) return ModeLabel::spatial;
  if (mode.slice_mean_variance > thresholds.temporal) return ModeLabel::temporal;
  return ModeLabel::ambiguous;
}

std::vector<EigenMode> analyze_spectrum(SpectrumResult& spectrum, const SparseMatrix& mass,
                                        const SliceQuadrature& quadrature,
                                        const ClassifyThresholds& thresholds) {
  std::vector<EigenMode> modes;
  modes.reserve(spectrum.size());
  spectrum.labels.assign(spectrum.size(), "");
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    modes.push_back(normalize_mode(spectrum.eigenvectors.col(static_cast<Eigen::Index>(k)),
                                   spectrum.eigenvalues[k], mass, quadrature));
    modes.back().label = classify(modes.back(), thresholds);
    spectrum.labels[k] = to_string(modes.back().label);
  }
  return modes;
}

std::vector<std::size_t> indices_with_label(const std::vector<EigenMode>& modes, ModeLabel label) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < modes.size(); ++k)
    if (modes[k].label == label) out.push_back(k);
  return out;
}

double suggest_a(const DomainSpec& domain, double tau) {
  domain.validate();
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  const double l = domain.max_side();
  return domain.boundary == Boundary::periodic ? 2.0 * tau / l : tau / l;
}

namespace {

double box_duration(double tau1, double tau2, double tau) {
  if (!(tau1 >= 0.0 && tau1 < tau2 && tau2 <= tau))
    throw DomainError("need 0 <= tau1 < tau2 <= tau");
  return tau2 - tau1;
}

}  // namespace

double cheeger_box(const CheegerBox& box, double a) {
  const double duration = box_duration(box.tau1, box.tau2, box.tau);
  if (!(a > 0.0)) throw DomainError("a must be positive");
  if (!(box.area > 0.0) || !(box.domain_area > 0.0)) throw DomainError("areas must be positive");
  if (duration * box.area > 0.5 * box.tau * box.domain_area)
    throw VolumeTooLarge("box holds more than half of the space-time volume");
  const double faces = box.touches_temporal_face ? 1.0 : 2.0;
  return faces * a / duration + box.dynamic_cheeger;
}

double temporal_cheeger(int k, double a, double tau) {
  if (k < 1) throw DomainError("temporal index must be at least 1");
  return 2.0 * k * a / tau;
}

double predict_spectral_position(double dynamic_cheeger, double tau1, double tau2, double tau,
                                 double a, bool touches_temporal_face) {
  if (!(a > 0.0)) throw DomainError("a must be positive");
  double duration = box_duration(tau1, tau2, tau);
  if (touches_temporal_face) duration *= 2.0;
  return tau * (1.0 / duration + dynamic_cheeger / (2.0 * a));
}

double predict_a(double dynamic_cheeger, double tau1, double tau2, double tau, double k,
                 bool touches_temporal_face) {
  double duration = box_duration(tau1, tau2, tau);
  if (touches_temporal_face) duration *= 2.0;
  const double denom = k / tau - 1.0 / duration;
  if (!(denom > 0.0))
    throw InvalidK("k = " + io::format_double(k) + " does not exceed tau / duration = " +
                   io::format_double(tau / duration));
  return 0.5 * dynamic_cheeger / denom;
}

RayleighProfiles rayleigh_profiles(const EigenMode& mode, std::span<const SliceOperators> slices,
                                   const SliceQuadrature& quadrature, double a,
                                   double threshold) {
  const std::size_t T1 = mode.num_slices;
  if (slices.size() != T1) throw DomainError("one slice operator per time required");
  RayleighProfiles out;
  out.rho_temp.assign(T1, 0.0);
  out.rho_spat.assign(T1, 0.0);
  out.local_decay.assign(T1, 0.0);
  out.regimes.assign(T1, Regime::undefined);
  const double umax = *std::max_element(mode.slice_norms.begin(), mode.slice_norms.end());
  const auto& t = quadrature.times;

  double weighted = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < T1; ++i) {
    const double u = mode.slice_norms[i];
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == T1 ? i : i + 1;
    const Eigen::VectorXd dw = (mode.slice(hi) - mode.slice(lo)) / (t[hi] - t[lo]);
    const double temporal = dw.dot(quadrature.masses[i] * dw);
    const double spatial = -mode.slice(i).dot(slices[i].stiffness * mode.slice(i));
    // The average uses the numerators, so slices with vanishing u still count.
    weighted += quadrature.weight(i) * (a * a * temporal + spatial);
    mass += quadrature.weight(i) * u;
    if (!(u >= 1e-12 * umax) || !(u > 0.0)) {
      ++out.underflow_slices;
      continue;
    }
    out.rho_temp[i] = temporal / u;
    out.rho_spat[i] = spatial / u;
    out.local_decay[i] = mode.eigenvalue + a * a * out.rho_temp[i] + out.rho_spat[i];
    if (out.local_decay[i] < -threshold)
      out.regimes[i] = Regime::coherent;
    else if (out.local_decay[i] > threshold)
      out.regimes[i] = Regime::mixing;
    else
      out.regimes[i] = Regime::neutral;
  }
  out.average_decay = mass > 0.0 ? weighted / mass : 0.0;
  return out;
}

SebaBasis seba(const Eigen::MatrixXd& modes, const SebaOptions& options) {
  const Eigen::Index p = modes.rows(), r = modes.cols();
  if (r < 2) throw DomainError("SEBA needs at least two modes");
  if (p < r) throw DomainError("SEBA needs more rows than modes");
  const double mu = options.mu > 0.0 ? options.mu : 0.99 / std::sqrt(static_cast<double>(p));

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(modes);
  const Eigen::MatrixXd V = qr.householderQ() * Eigen::MatrixXd::Identity(p, r);

  SebaBasis out;
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(r, r);
  Eigen::MatrixXd S(p, r);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::MatrixXd Z = V * R.transpose();
    for (Eigen::Index c = 0; c < r; ++c) {
      for (Eigen::Index i = 0; i < p; ++i) {
        const double z = Z(i, c);
        S(i, c) = std::copysign(std::max(std::abs(z) - mu, 0.0), z);
      }
      const double norm = S.col(c).norm();
      if (norm > 0.0) S.col(c) /= norm;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(S.transpose() * V,
                                                Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd next = svd.matrixU() * svd.matrixV().transpose();
    out.last_increment = (next - R).norm();
    R = next;
    out.iterations = iter + 1;
    if (out.last_increment < options.tol) {
      out.converged = true;
      break;
    }
  }
  // Final sparse vectors from the converged rotation.
  const Eigen::MatrixXd Z = V * R.transpose();
  for (Eigen::Index c = 0; c < r; ++c)
    for (Eigen::Index i = 0; i < p; ++i) {
      const double z = Z(i, c);
      S(i, c) = std::copysign(std::max(std::abs(z) - mu, 0.0), z);
    }
  for (Eigen::Index c = 0; c < r; ++c) {
    if (S.col(c).sum() < 0.0) S.col(c) *= -1.0;
    const double top = S.col(c).maxCoeff();
    if (top > 0.0) S.col(c) /= top;
  }

  out.sparse = S;
  out.rotated = Z;
  out.rotation = R;
  out.s_max = S.rowwise().maxCoeff();
  out.orthogonality_error = (R.transpose() * R - Eigen::MatrixXd::Identity(r, r)).norm();
  for (Eigen::Index c = 0; c < r; ++c) {
    const auto zeros = (S.col(c).array() == 0.0).count();
    out.zero_fraction.push_back(static_cast<double>(zeros) / static_cast<double>(p));
    const double top = S.col(c).maxCoeff();
    out.min_over_max.push_back(top > 0.0 ? S.col(c).minCoeff() / top : 0.0);
  }
  return out;
}

std::vector<std::pair<Vec2, double>> pushforward_slice(std::span<const double> field,
                                                       const TrajectoryEnsemble& ensemble,
                                                       std::size_t target) {
  if (field.size() != ensemble.num_trajectories())
    throw DomainError("one field value per trajectory required");
  if (target >= ensemble.num_times()) throw DomainError("time index out of range");
  std::vector<std::pair<Vec2, double>> out;
  out.reserve(field.size());
  for (std::size_t n = 0; n < field.size(); ++n)
    out.emplace_back(ensemble.position(target, n), field[n]);
  return out;
}

void write_modes_csv(const std::filesystem::path& path, const std::vector<EigenMode>& modes) {
  std::ostringstream out;
  out << "k,lambda,label,variance\n";
  for (std::size_t k = 0; k < modes.size(); ++k)
    out << k + 1 << ',' << io::format_double(modes[k].eigenvalue) << ','
        << to_string(modes[k].label) << ',' << io::format_double(modes[k].slice_mean_variance)
        << '\n';
  io::write_text(path, out.str());
}

void write_slicenorms_csv(const std::filesystem::path& path, const std::vector<EigenMode>& modes,
                          std::span<const double> times) {
  std::ostringstream out;
  out << 't';
  for (std::size_t k = 0; k < modes.size(); ++k) out << ",u" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << io::format_double(times[i]);
    for (const auto& m : modes) out << ',' << io::format_double(m.slice_norms[i]);
    out << '\n';
  }
  io::write_text(path, out.str());
}

void write_regimes_csv(const std::filesystem::path& path,
                       const std::vector<RayleighProfiles>& profiles,
                       const std::vector<std::size_t>& mode_indices,
                       std::span<const double> times) {
  std::ostringstream out;
  out << 't';
  for (std::size_t k : mode_indices) out << ",mode" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << io::format_double(times[i]);
    for (const auto& p : profiles) out << ',' << to_string(p.regimes[i]);
    out << '\n';
  }
  io::write_text(path, out.str());
}

void write_profile_transforms_csv(const std::filesystem::path& path,
                                  const std::vector<EigenMode>& modes,
                                  const std::vector<std::size_t>& mode_indices,
                                  std::span<const double> times) {
  std::ostringstream out;
  out << 't';
  for (std::size_t k : mode_indices) out << ",arcsin" << k + 1 << ",log" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << io::format_double(times[i]);
    for (std::size_t k : mode_indices) {
      const auto& u = modes[k].slice_norms;
      const double top = *std::max_element(u.begin(), u.end());
      const double ratio = std::clamp(u[i] / top, 0.0, 1.0);
      out << ',' << io::format_double(std::asin(ratio)) << ','
          << io::format_double(std::log(u[i]));
    }
    out << '\n';
  }
  io::write_text(path, out.str());
}

}  // namespace coherence
