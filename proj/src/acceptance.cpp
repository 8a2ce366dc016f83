#include "coherence/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "coherence/pipeline.hpp"

namespace coherence {

using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double rel(double value, double reference) {
  return std::abs(value - reference) / std::max(std::abs(reference), 1e-300);
}

// Everything the Childress-Soward criteria share: one ensemble, one set of
// slices, and spectra solved on demand per a.
class ChildressSoward {
 public:
  struct Solved {
    SpectrumResult spectrum;
    std::vector<EigenMode> modes;
    double seconds = 0.0;

    std::vector<double> with_label(ModeLabel label) const {
      std::vector<double> out;
      for (const auto& m : modes)
        if (m.label == label) out.push_back(m.eigenvalue);
      return out;
    }
  };

  ChildressSoward(AcceptanceProfile profile, const fs::path& workdir, bool verbose) {
    const bool full = profile == AcceptanceProfile::full;
    config_.seeds_x = config_.seeds_y = full ? 35 : 25;
    config_.num_times = full ? 101 : 51;
    config_.output = workdir / (full ? "full" : "ci");
    config_.verbose = verbose;
  }

  void prepare() {
    if (base_) return;
    const auto start = Clock::now();
    std::vector<StageRecord> log;
    ensemble_ = obtain_trajectories(config_, log);
    slices_ = obtain_slices(config_, ensemble_, log);
    times_.assign(ensemble_.times().begin(), ensemble_.times().end());
    base_ = build_inflated_base(slices_, ensemble_.duration());
    quadrature_ = {times_, slice_masses(slices_, SliceMass::initial)};
    setup_seconds_ = seconds_since(start);
  }

  const Solved& at(double a) {
    prepare();
    auto it = solved_.find(a);
    if (it != solved_.end()) return it->second;
    const auto start = Clock::now();
    Solved s;
    EigsOptions o;
    o.count = config_.modes;
    o.tol = config_.tol;
    o.verbose = config_.verbose;
    s.spectrum = solve_pencil(inflate(base_, a), o);
    s.modes = analyze_spectrum(s.spectrum, base_->mass, quadrature_);
    s.seconds = seconds_since(start);
    return solved_.emplace(a, std::move(s)).first->second;
  }

  const std::vector<double>& dynamic() {
    prepare();
    if (dynamic_.empty()) {
      EigsOptions o;
      o.count = 8;
      o.tol = config_.tol;
      dynamic_ = solve_pencil(assemble_dynamic_laplacian(slices_, times_), o).eigenvalues;
    }
    return dynamic_;
  }

  double setup_seconds() const { return setup_seconds_; }
  double tol() const { return config_.tol; }
  double tau() const { return ensemble_.duration(); }
  std::span<const double> times() const { return times_; }

 private:
  PipelineConfig config_;
  TrajectoryEnsemble ensemble_;
  std::vector<SliceOperators> slices_;
  std::vector<double> times_;
  std::shared_ptr<const InflatedBase> base_;
  SliceQuadrature quadrature_;
  double setup_seconds_ = 0.0;
  std::map<double, Solved> solved_;
  std::vector<double> dynamic_;
};

struct Verdict {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& failure) {
    if (!ok) {
      passed = false;
      detail << " FAILED: " << failure << ';';
    }
  }
};

// 1. Spectrum pattern and values at a = 2/pi.
Verdict spectrum_reproduction(ChildressSoward& cs, AcceptanceProfile profile) {
  const bool full = profile == AcceptanceProfile::full;
  const double value_tol = full ? 0.10 : 0.20;
  const double spread_tol = full ? 0.15 : 0.20;
  const double time_limit = full ? 900.0 : 120.0;
  const double a = 2 / pi;
  const auto& s = cs.at(a);
  const double tau = cs.tau();
  Verdict v;

  const auto spatial = s.with_label(ModeLabel::spatial);
  const auto temporal = s.with_label(ModeLabel::temporal);
  v.require(s.modes[0].label == ModeLabel::spatial &&
                std::abs(s.spectrum.eigenvalues[0]) < 1e-8 * std::abs(s.spectrum.eigenvalues[1]),
            "Lambda_1 is not the constant spatial mode");
  v.require(s.modes[1].label == ModeLabel::temporal, "Lambda_2 is not temporal");
  v.require(temporal.size() >= 2, "fewer than two temporal modes");
  for (std::size_t k = 1; k <= std::min<std::size_t>(2, temporal.size()); ++k) {
    const double exact = -std::pow(a * pi * static_cast<double>(k) / tau, 2);
    v.detail << " temporal" << k << "=" << fmt(temporal[k - 1]) << " (err "
             << fmt(rel(temporal[k - 1], exact), 2) << ")";
    v.require(rel(temporal[k - 1], exact) < 5e-3, "temporal eigenvalue off");
  }
  v.require(spatial.size() >= 5, "fewer than five spatial modes");
  if (spatial.size() >= 5) {
    const double reference[3] = {-3.5517, -3.7559, -3.9847};
    v.detail << " spatial2..4=";
    for (int k = 0; k < 3; ++k) {
      v.detail << fmt(spatial[k + 1]) << (k < 2 ? "," : "");
      v.require(rel(spatial[k + 1], reference[k]) < value_tol,
                "spatial eigenvalue " + std::to_string(k + 2) + " outside tolerance");
    }
    const double hi = spatial[1], lo = spatial[3];
    const double spread = (hi - lo) / std::abs(hi);
    const double gap = spatial[3] - spatial[4];
    v.detail << " spread=" << fmt(spread, 3) << " gap=" << fmt(gap, 3);
    v.require(spread < spread_tol, "cluster spread too large");
    v.require(gap > hi - lo, "no gap after the cluster");
  }
  const double seconds = cs.setup_seconds() + s.seconds;
  v.detail << " runtime=" << fmt(seconds, 3) << "s";
  v.require(seconds < time_limit, "runtime above " + fmt(time_limit) + " s");
  return v;
}

// 2. Temporal eigenvalues under time refinement on a coarse Childress-Soward
// cloud. The lattice is shifted by half a cell: seeds on the separatrices
// x, y in {0, pi} pile up at the saddles and mesh into slivers.
Verdict temporal_formula() {
  const double a = 2 / pi;
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto schedule = ChildressSowardSchedule::partially_coherent();
  const std::vector<std::size_t> steps{25, 50, 100, 200};
  std::vector<std::array<double, 3>> errors;
  std::vector<Vec2> seeds;
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) seeds.push_back({(i + 0.5) * pi / 6, (j + 0.5) * pi / 6});
  Verdict v;
  for (std::size_t T : steps) {
    const auto times = uniform_times(-1.0, 1.0, T + 1);
    const auto e = integrate_trajectories(schedule, domain, seeds, times);
    const auto slices = assemble_all_slices(e);
    const auto sys = assemble_inflated(slices, a, times);
    EigsOptions o;
    o.count = 24;
    auto spectrum = solve_pencil(sys, o);
    const SliceQuadrature q{times, slice_masses(slices, SliceMass::initial)};
    const auto modes = analyze_spectrum(spectrum, sys.M(), q);
    const auto temporal = indices_with_label(modes, ModeLabel::temporal);
    if (temporal.size() < 3) {
      v.require(false, "fewer than three temporal modes at T=" + std::to_string(T));
      return v;
    }
    std::array<double, 3> err{};
    for (int k = 1; k <= 3; ++k) {
      const double exact = -std::pow(a * pi * k / 2.0, 2);
      err[k - 1] = rel(modes[temporal[k - 1]].eigenvalue, exact);
    }
    errors.push_back(err);
  }
  for (int k = 0; k < 3; ++k) {
    const double at100 = errors[2][k];
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      mx += std::log(double(steps[i])) / double(steps.size());
      my += std::log(errors[i][k]) / double(steps.size());
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const double dx = std::log(double(steps[i])) - mx;
      sxy += dx * (std::log(errors[i][k]) - my);
      sxx += dx * dx;
    }
    const double order = -sxy / sxx;
    v.detail << " k=" << k + 1 << ": err(T=100)=" << fmt(at100, 3) << " order=" << fmt(order, 3);
    v.require(at100 < 1e-2, "relative error at T=100 above 1e-2");
    v.require(std::abs(order - 2.0) <= 0.3, "convergence order outside 2 +- 0.3");
  }
  return v;
}

// 3. Spatial eigenvalues across a = 2^l / pi.
Verdict eigenvalue_bounds(ChildressSoward& cs) {
  std::vector<double> a_values;
  std::vector<std::vector<double>> spatial;
  for (int l = -1; l <= 5; ++l) {
    const double a = std::pow(2.0, l) / pi;
    a_values.push_back(a);
    spatial.push_back(cs.at(a).with_label(ModeLabel::spatial));
  }
  const auto& dynamic = cs.dynamic();
  EigBoundsOptions o;
  o.slack = 0.05;
  o.monotonicity_tol = 2 * cs.tol();
  o.limit_tol = 0.05;
  const auto report =
      verify_eigbounds(a_values, spatial, std::vector<double>(dynamic.begin(), dynamic.begin() + 4), o);
  Verdict v;
  for (const auto& row : report.rows) {
    if (row.k == 1) continue;
    v.detail << " k=" << row.k << ": dynamic=" << fmt(row.dynamic)
             << " at a=32/pi " << fmt(row.spatial.back()) << " (gap "
             << fmt(rel(row.spatial.back(), row.dynamic), 3) << ")";
  }
  for (const auto& msg : report.violations) v.require(false, msg);
  return v;
}

// 4. Slice-norm lifetimes of the leading spatial modes at a = 2/pi.
Verdict lifetime_detection(ChildressSoward& cs) {
  const auto& s = cs.at(2 / pi);
  const auto spatial = indices_with_label(s.modes, ModeLabel::spatial);
  const auto times = cs.times();
  Verdict v;
  if (spatial.size() < 4) {
    v.require(false, "fewer than four spatial modes");
    return v;
  }
  const double tau = times.back() - times.front();
  const double true_split = (-0.5 - times.front()) / tau;
  for (std::size_t j = 1; j <= 3; ++j) {
    const auto& u = s.modes[spatial[j]].slice_norms;
    double early = 0, late = 0;
    int n_early = 0, n_late = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] <= -0.6 + 1e-12) early += u[i], ++n_early;
      if (times[i] >= -1e-12) late += u[i], ++n_late;
    }
    const double ratio = (early / n_early) / (late / n_late);
    const auto fit = fit_profile(times, u);
    v.detail << " mode" << spatial[j] + 1 << ": ratio=" << fmt(ratio, 3)
             << " p_hat=" << fmt(fit.p_hat, 3);
    v.require(ratio >= 5.0, "early/late slice-norm ratio below 5");
    v.require(std::abs(fit.p_hat - true_split) <= 0.15, "changepoint more than 0.15 from t=-0.5");
  }
  return v;
}

// 5. Surrogate eigenvalue against finite differences and its limits.
Verdict surrogate_check() {
  const auto start = Clock::now();
  SurrogateProblem s;
  s.z = 2.0;
  s.Z = 40.0;
  s.p = 0.25;
  s.a = std::sqrt(2.0) / pi;
  const double nu = solve_dominant(s).nu0;
  const double fd = solve_fd(s, 1000, false).eigenvalues[0];
  auto thin = s;
  thin.p = 1e-3;
  const double nu_p = solve_dominant(thin).nu0;
  auto slow = s;
  slow.a = 1e-3;
  const double nu_a = solve_dominant(slow).nu0;
  const double seconds = seconds_since(start);
  Verdict v;
  v.detail << " nu0=" << fmt(nu, 10) << " fd=" << fmt(fd, 10) << " (rel " << fmt(rel(nu, fd), 2)
           << ") nu0(p=1e-3)=" << fmt(nu_p) << " nu0(a=1e-3)=" << fmt(nu_a)
           << " runtime=" << fmt(seconds, 3) << "s";
  v.require(rel(nu, fd) <= 1e-3, "analytic and FD eigenvalues differ");
  v.require(rel(nu_p, -s.Z) <= 1e-2, "p -> 0 limit");
  v.require(rel(nu_a, -s.z) <= 1e-2, "a -> 0 limit");
  v.require(seconds < 5.0, "runtime above 5 s");
  return v;
}

std::vector<Vec2> lattice(int m, double l) {
  std::vector<Vec2> p;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) p.push_back({i * l / m, j * l / m});
  return p;
}

// Textbook P1 stiffness (negative) and mass in time on T uniform steps.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> p1_time(std::size_t T, double tau) {
  const double h = tau / static_cast<double>(T);
  const auto n = static_cast<Eigen::Index>(T + 1);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n), M = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index e = 0; e + 1 < n; ++e) {
    K(e, e) -= 1 / h, K(e + 1, e + 1) -= 1 / h, K(e, e + 1) += 1 / h, K(e + 1, e) += 1 / h;
    M(e, e) += h / 3, M(e + 1, e + 1) += h / 3, M(e, e + 1) += h / 6, M(e + 1, e) += h / 6;
  }
  return {K, M};
}

// 6. Identity flow against the separable dense oracle.
Verdict identity_oracle() {
  const double a = 2 / pi, tau = 2.0;
  const std::size_t T = 8, K = 12;
  const auto domain = DomainSpec::torus(2 * pi, 2 * pi);
  const auto ops = assemble_slice(triangulate_slice(lattice(5, 2 * pi), domain));
  const std::vector<SliceOperators> slices(T + 1, ops);
  const auto sys = assemble_inflated(slices, a, tau);
  EigsOptions o;
  o.count = K;
  const auto r = solve_pencil(sys, o);

  const auto [Kt, Mt] = p1_time(T, tau);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> time_es(Kt, Mt);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> space_es(
      Eigen::MatrixXd(ops.stiffness), Eigen::MatrixXd(ops.mass));
  std::vector<double> oracle;
  for (double theta : time_es.eigenvalues())
    for (double mu : space_es.eigenvalues()) oracle.push_back(a * a * theta + mu);
  std::sort(oracle.rbegin(), oracle.rend());

  Verdict v;
  v.require(!r.dense, "solver took the dense path");
  double worst = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    worst = std::max(worst, std::abs(r.eigenvalues[k] - oracle[k]) / std::max(std::abs(oracle[k]), 1.0));
  v.detail << " max relative difference " << fmt(worst, 3) << " over " << K << " eigenvalues";
  v.require(worst <= 1e-8, "eigenvalues differ from the separable oracle");
  return v;
}

// 7. Closed-form formulas.
Verdict formulas() {
  Verdict v;
  const double a = 2 / pi, tau = 2.0;
  const double suggested = suggest_a(DomainSpec::torus(2 * pi, 2 * pi), tau);
  // Two vortex cells over [-1, -0.5]: h^D = 2/pi, duration 1/2, touching t0.
  const double predicted = predict_a(2 / pi, 0.0, 0.5, tau, 3.0, true);
  const double position = predict_spectral_position(2 / pi, 0.0, 0.5, tau, a, true);
  v.detail << " suggest_a=" << fmt(suggested, 12) << " predict_a(k=3)=" << fmt(predicted, 12)
           << " position(a=2/pi)=" << fmt(position, 12);
  v.require(std::abs(suggested - a) <= 1e-14, "suggest_a");
  v.require(std::abs(predicted - a) <= 1e-14, "predict_a");
  v.require(std::abs(position - 3.0) <= 1e-13, "predict_spectral_position");

  // Bands of the positive set of cos(k pi t / tau) span the whole domain:
  // [0, tau / 2k] touching t = 0, and interior bands of length tau / k.
  const double area = 4 * pi * pi;
  double worst = 0.0;
  for (int k = 1; k <= 6; ++k)
    for (double ak : {0.1, a, 3.0}) {
      const double expected = 2.0 * k * ak / tau;
      const CheegerBox first{area, area, 0.0, 0.0, tau / (2 * k), tau, true};
      worst = std::max(worst, std::abs(cheeger_box(first, ak) - expected) / expected);
      if (k >= 3) {
        const CheegerBox inner{area, area, 0.0, 3 * tau / (2 * k), 5 * tau / (2 * k), tau, false};
        worst = std::max(worst, std::abs(cheeger_box(inner, ak) - expected) / expected);
      }
    }
  v.detail << " temporal Cheeger max relative deviation " << fmt(worst, 3);
  v.require(worst <= 1e-15, "cheeger_box on temporal level sets");
  return v;
}

// 8. Randomized invariants.
Verdict invariants() {
  Verdict v;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double asym = 0, nullspace = 0, mass = 0, residual = 0, ortho = 0, c1 = 0;
  int classified = 0, total_cosines = 0;
  const double tol = 1e-6;
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 60 + static_cast<int>(60 * u(rng));
    const std::size_t T = 6 + static_cast<std::size_t>(6 * u(rng));
    const double shear = 0.5 * u(rng), a = 0.2 + u(rng);
    std::vector<Vec2> base(static_cast<std::size_t>(n));
    for (auto& q : base) q = {u(rng), u(rng)};
    const auto domain = DomainSpec::torus(1, 1);
    std::vector<SliceOperators> slices;
    for (std::size_t i = 0; i <= T; ++i) {
      auto p = base;
      for (auto& q : p) q = domain.wrap({q.x + shear * double(i) * std::sin(2 * pi * q.y), q.y});
      slices.push_back(assemble_slice(triangulate_slice(p, domain)));
      const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
      mass = std::max(mass, std::abs(one.dot(slices.back().mass * one) - 1.0));
    }
    const auto sys = assemble_inflated(slices, a, 1.0);
    const SparseMatrix Dt = sys.D.transpose(), Mt = sys.M().transpose();
    asym = std::max({asym, (sys.D - Dt).cwiseAbs().sum(), (sys.M() - Mt).cwiseAbs().sum()});
    double dmax = 0;
    for (int k = 0; k < sys.D.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(sys.D, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sys.D.rows());
    nullspace = std::max(nullspace, (sys.D * ones).cwiseAbs().maxCoeff() / dmax);
    EigsOptions o;
    o.count = 6;
    o.tol = tol;
    const auto r = solve_pencil(sys, o);
    residual = std::max(residual, *std::max_element(r.residuals.begin(), r.residuals.end()));

    const auto times = uniform_times(0.0, 1.0, T + 1);
    const SliceQuadrature q{times, slice_masses(slices, SliceMass::initial)};
    for (int k = 1; k <= 3; ++k) {
      Eigen::VectorXd w(sys.D.rows());
      for (std::size_t i = 0; i <= T; ++i)
        w.segment(static_cast<Eigen::Index>(i) * n, n)
            .setConstant(std::sqrt(2.0) * std::cos(k * pi * times[i]));
      ++total_cosines;
      if (classify(normalize_mode(w, 0.0, sys.M(), q)) == ModeLabel::temporal) ++classified;
    }
    Eigen::VectorXd one = Eigen::VectorXd::Ones(sys.D.rows());
    ++total_cosines;
    if (classify(normalize_mode(one, 0.0, sys.M(), q)) == ModeLabel::spatial) ++classified;

    std::normal_distribution<double> g;
    Eigen::MatrixXd X(200, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
    ortho = std::max(ortho, seba(X).orthogonality_error);
  }
  for (int trial = 0; trial < 20; ++trial) {
    SurrogateProblem s;
    s.z = 0.5 + 3 * u(rng);
    s.Z = s.z + 5 + 60 * u(rng);
    s.p = 0.05 + 0.9 * u(rng);
    s.a = 0.05 + 0.6 * u(rng);
    const auto sol = solve_dominant(s);
    const double below = s.p * (1 - 1e-15), above = s.p * (1 + 1e-15);
    c1 = std::max({c1, std::abs(sol(below) - sol(above)),
                   std::abs(sol.derivative(below) - sol.derivative(above))});
  }
  v.detail << " asymmetry=" << fmt(asym, 3) << " D1/max|D|=" << fmt(nullspace, 3)
           << " mass=" << fmt(mass, 3) << " residual=" << fmt(residual, 3)
           << " seba=" << fmt(ortho, 3) << " classified=" << classified << "/" << total_cosines
           << " C1=" << fmt(c1, 3);
  v.require(asym == 0.0, "pencil not exactly symmetric");
  v.require(nullspace <= 1e-10, "D 1 != 0");
  v.require(mass <= 1e-8, "slice mass totals");
  v.require(residual <= tol, "eigen residuals above tol");
  v.require(ortho <= 1e-10, "SEBA rotation not orthogonal");
  v.require(classified == total_cosines, "misclassified cosine or constant");
  v.require(c1 <= 1e-10, "surrogate profile not C1 at p");
  return v;
}

}  // namespace

std::string format_result(const CriterionResult& r) {
  std::ostringstream s;
  s << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ":" << r.detail << " ("
    << fmt(r.seconds, 3) << " s)";
  return s.str();
}

std::vector<CriterionResult> run_acceptance(
    const AcceptanceOptions& options, const std::function<void(const CriterionResult&)>& on_result) {
  ChildressSoward cs(options.profile, options.workdir, options.verbose);
  const std::string scale = options.profile == AcceptanceProfile::full ? " (full)" : " (ci)";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"Childress-Soward spectrum" + scale,
       [&] { return spectrum_reproduction(cs, options.profile); }},
      {"temporal eigenvalue formula", [] { return temporal_formula(); }},
      {"eigenvalue bounds across a" + scale, [&] { return eigenvalue_bounds(cs); }},
      {"lifetime detection" + scale, [&] { return lifetime_detection(cs); }},
      {"surrogate cross-check", [] { return surrogate_check(); }},
      {"identity flow oracle", [] { return identity_oracle(); }},
      {"closed-form formulas", [] { return formulas(); }},
      {"invariant suite", [] { return invariants(); }},
  };
  std::vector<CriterionResult> results;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), id) == options.only.end())
      continue;
    CriterionResult r;
    r.id = id;
    r.name = criteria[i].first;
    const auto start = Clock::now();
    try {
      const auto verdict = criteria[i].second();
      r.passed = verdict.passed;
      r.detail = verdict.detail.str();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string(" error: ") + e.what();
    }
    r.seconds = seconds_since(start);
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace coherence
