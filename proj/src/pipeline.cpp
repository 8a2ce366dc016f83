#include "coherence/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "coherence/io.hpp"

namespace coherence {

using nlohmann::json;
namespace fs = std::filesystem;

std::string library_version() { return COHERENCE_VERSION; }

namespace {

template <class T>
T get(const json& value, const char* key) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config key '") + key + "': " + e.what());
  }
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  PipelineConfig c;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "input") c.input = get<std::string>(v, k);
    else if (key == "seeds_x") c.seeds_x = get<std::size_t>(v, k);
    else if (key == "seeds_y") c.seeds_y = get<std::size_t>(v, k);
    else if (key == "num_times") c.num_times = get<std::size_t>(v, k);
    else if (key == "t0") c.t0 = get<double>(v, k);
    else if (key == "t1") c.t1 = get<double>(v, k);
    else if (key == "reading") c.reading = get<std::string>(v, k);
    else if (key == "substeps") c.substeps = get<std::size_t>(v, k);
    else if (key == "a") {
      if (v.is_string()) {
        if (v.get<std::string>() != "auto") throw SchemaError("config key 'a': number or \"auto\"");
        c.a.reset();
      } else {
        c.a = get<double>(v, k);
      }
    } else if (key == "modes") c.modes = get<std::size_t>(v, k);
    else if (key == "tol") c.tol = get<double>(v, k);
    else if (key == "seed") c.seed = get<std::uint64_t>(v, k);
    else if (key == "slice_mass") c.slice_mass = get<std::string>(v, k);
    else if (key == "spatial_threshold") c.spatial_threshold = get<double>(v, k);
    else if (key == "temporal_threshold") c.temporal_threshold = get<double>(v, k);
    else if (key == "regime_threshold") c.regime_threshold = get<double>(v, k);
    else if (key == "seba_modes") c.seba_modes = get<std::size_t>(v, k);
    else if (key == "seba_slices") c.seba_slices = get<std::vector<std::size_t>>(v, k);
    else if (key == "sweep_a") c.sweep_a = get<std::vector<double>>(v, k);
    else if (key == "output") c.output = get<std::string>(v, k);
    else if (key == "cache") c.cache = get<std::string>(v, k);
    else if (key == "threads") c.threads = get<std::size_t>(v, k);
    else if (key == "check") c.check = get<bool>(v, k);
    else if (key == "verbose") c.verbose = get<bool>(v, k);
    else throw SchemaError("unknown config key '" + key + "'");
  }
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["input"] = input;
  j["seeds_x"] = seeds_x;
  j["seeds_y"] = seeds_y;
  j["num_times"] = num_times;
  j["t0"] = t0;
  j["t1"] = t1;
  j["reading"] = reading;
  j["substeps"] = substeps;
  j["a"] = a ? json(*a) : json("auto");
  j["modes"] = modes;
  j["tol"] = tol;
  j["seed"] = seed;
  j["slice_mass"] = slice_mass;
  j["spatial_threshold"] = spatial_threshold;
  j["temporal_threshold"] = temporal_threshold;
  j["regime_threshold"] = regime_threshold;
  j["seba_modes"] = seba_modes;
  j["seba_slices"] = seba_slices;
  j["sweep_a"] = sweep_a;
  j["output"] = output.string();
  j["cache"] = cache.string();
  j["threads"] = threads;
  j["check"] = check;
  j["verbose"] = verbose;
  return j;
}

void PipelineConfig::validate() const {
  if (input == "generate") {
    if (seeds_x < 2 || seeds_y < 2) throw DomainError("need at least 2 x 2 seeds");
    if (num_times < 2) throw DomainError("need at least two times");
    if (!(t1 > t0)) throw DomainError("need t1 > t0");
    if (substeps == 0) throw DomainError("substeps must be positive");
    amplitude_reading();
  }
  if (a && !(*a > 0.0)) throw DomainError("a must be positive");
  if (modes < 2) throw DomainError("at least two modes required");
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  if (!(spatial_threshold >= 0.0 && temporal_threshold >= spatial_threshold))
    throw DomainError("need 0 <= spatial_threshold <= temporal_threshold");
  if (seba_modes < 2) throw DomainError("SEBA needs at least two modes");
  mass_mode();
  for (std::size_t i = 1; i < sweep_a.size(); ++i)
    if (!(sweep_a[i] > sweep_a[i - 1])) throw DomainError("sweep_a must be increasing");
  for (double v : sweep_a)
    if (!(v > 0.0)) throw DomainError("sweep_a values must be positive");
}

SliceMass PipelineConfig::mass_mode() const {
  if (slice_mass == "initial") return SliceMass::initial;
  if (slice_mass == "per_slice") return SliceMass::per_slice;
  throw DomainError("slice_mass must be 'initial' or 'per_slice'");
}

ChildressSowardSchedule::AmplitudeReading PipelineConfig::amplitude_reading() const {
  if (reading == "split") return ChildressSowardSchedule::AmplitudeReading::split;
  if (reading == "overlap") return ChildressSowardSchedule::AmplitudeReading::overlap;
  throw DomainError("reading must be 'split' or 'overlap'");
}

PipelineConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

namespace {

json generation_key(const PipelineConfig& c) {
  return {{"seeds_x", c.seeds_x}, {"seeds_y", c.seeds_y}, {"num_times", c.num_times},
          {"t0", c.t0},           {"t1", c.t1},           {"reading", c.reading},
          {"substeps", c.substeps}};
}

}  // namespace

TrajectoryEnsemble obtain_trajectories(const PipelineConfig& config,
                                       std::vector<StageRecord>& log) {
  if (config.input != "generate")
    return run_stage(log, "load_trajectories", [&] { return load_trajectories(config.input); });

  const fs::path dir = config.cache_dir() / "trajectories";
  const fs::path key_path = dir / "generation.json";
  const json key = generation_key(config);
  if (fs::exists(key_path) && fs::exists(dir / "manifest.json")) {
    json stored;
    try {
      stored = json::parse(io::read_text(key_path));
    } catch (const json::exception&) {
      stored = nullptr;
    }
    if (stored == key) {
      auto e = run_stage(log, "generate", [&] { return load_trajectories(dir / "manifest.json"); });
      log.back().cached = true;
      return e;
    }
  }
  return run_stage(log, "generate", [&] {
    const auto domain = DomainSpec::torus(2 * std::numbers::pi, 2 * std::numbers::pi);
    const auto times = uniform_times(config.t0, config.t1, config.num_times);
    IntegrationOptions options;
    options.substeps = config.substeps;
    options.threads = config.threads;
    auto e = integrate_trajectories(
        ChildressSowardSchedule::partially_coherent(config.amplitude_reading()), domain,
        SeedGrid{config.seeds_x, config.seeds_y}, times, options);
    fs::create_directories(dir);
    save_trajectories(e, dir);
    io::write_text(key_path, key.dump(2) + "\n");
    return e;
  });
}

std::vector<SliceOperators> obtain_slices(const PipelineConfig& config,
                                          const TrajectoryEnsemble& ensemble,
                                          std::vector<StageRecord>& log) {
  const fs::path dir = config.cache_dir() / "slices";
  const auto fingerprint = ensemble_fingerprint(ensemble);
  std::vector<SliceOperators> slices;
  bool hit = false;
  run_stage(log, "assemble", [&] {
    hit = load_slice_cache(dir, fingerprint, slices);
    if (hit) return;
    slices = assemble_all_slices(ensemble, config.threads);
    fs::create_directories(dir);
    save_slice_cache(dir, slices, fingerprint);
  });
  log.back().cached = hit;
  return slices;
}

double resolve_a(const PipelineConfig& config, const TrajectoryEnsemble& ensemble) {
  return config.a ? *config.a : suggest_a(ensemble.domain(), ensemble.duration());
}

void save_spectrum(const fs::path& dir, const StoredSpectrum& stored) {
  fs::create_directories(dir);
  const auto& s = stored.spectrum;
  json j;
  j["a"] = stored.a;
  j["num_slices"] = stored.num_slices;
  j["num_nodes"] = stored.num_nodes;
  j["eigenvalues"] = s.eigenvalues;
  j["residuals"] = s.residuals;
  j["residual_floors"] = s.residual_floors;
  j["labels"] = s.labels;
  j["tolerance"] = s.tolerance;
  j["shift"] = s.shift;
  j["eigenvectors"] = "eigenvectors.bin";
  j["rows"] = s.eigenvectors.rows();
  j["cols"] = s.eigenvectors.cols();
  io::write_text(dir / "spectrum.json", j.dump(2) + "\n");
  static_assert(std::endian::native == std::endian::little, "eigenvector files are little-endian");
  std::ofstream out(dir / "eigenvectors.bin", std::ios::binary);
  out.write(reinterpret_cast<const char*>(s.eigenvectors.data()),
            static_cast<std::streamsize>(s.eigenvectors.size() * sizeof(double)));
  if (!out) throw ParseError("cannot write " + (dir / "eigenvectors.bin").string());
}

StoredSpectrum load_spectrum(const fs::path& dir) {
  json j;
  try {
    j = json::parse(io::read_text(dir / "spectrum.json"));
  } catch (const json::exception& e) {
    throw ParseError("spectrum.json: " + std::string(e.what()));
  }
  StoredSpectrum stored;
  try {
    stored.a = j.at("a").get<double>();
    stored.num_slices = j.at("num_slices").get<std::size_t>();
    stored.num_nodes = j.at("num_nodes").get<std::size_t>();
    auto& s = stored.spectrum;
    s.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    s.residuals = j.at("residuals").get<std::vector<double>>();
    s.residual_floors = j.value("residual_floors", std::vector<double>{});
    s.labels = j.value("labels", std::vector<std::string>{});
    s.tolerance = j.value("tolerance", 0.0);
    s.shift = j.value("shift", 0.0);
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (rows != static_cast<Eigen::Index>(stored.num_slices * stored.num_nodes) ||
        cols != static_cast<Eigen::Index>(s.eigenvalues.size()))
      throw SchemaError("spectrum.json: eigenvector shape does not match");
    s.eigenvectors.resize(rows, cols);
    std::ifstream in(dir / j.at("eigenvectors").get<std::string>(), std::ios::binary);
    in.read(reinterpret_cast<char*>(s.eigenvectors.data()),
            static_cast<std::streamsize>(s.eigenvectors.size() * sizeof(double)));
    if (!in) throw ParseError("eigenvector file is shorter than announced");
  } catch (const json::exception& e) {
    throw SchemaError("spectrum.json: " + std::string(e.what()));
  }
  return stored;
}

AnalysisResult analyze_run(const PipelineConfig& config, StoredSpectrum& stored,
                           std::span<const SliceOperators> slices, std::span<const double> times,
                           const fs::path& dir) {
  if (slices.size() != stored.num_slices || times.size() != stored.num_slices)
    throw SchemaError("spectrum does not match the slice data");
  const double tau = times.back() - times.front();
  const auto base = build_inflated_base(slices, tau, config.mass_mode());
  const SliceQuadrature quadrature{{times.begin(), times.end()},
                                   slice_masses(slices, config.mass_mode())};
  AnalysisResult r;
  r.modes = analyze_spectrum(stored.spectrum, base->mass, quadrature,
                             {config.spatial_threshold, config.temporal_threshold});
  r.spatial = indices_with_label(r.modes, ModeLabel::spatial);
  r.temporal = indices_with_label(r.modes, ModeLabel::temporal);
  for (std::size_t k : r.spatial) {
    r.profiles.push_back(
        rayleigh_profiles(r.modes[k], slices, quadrature, stored.a, config.regime_threshold));
    try {
      r.fits.emplace_back(fit_profile(times, r.modes[k].slice_norms));
    } catch (const FitDegenerate&) {
      r.fits.emplace_back(std::nullopt);
    }
  }

  fs::create_directories(dir);
  write_spectrum_csv(dir / "spectrum.csv", stored.spectrum);
  write_modes_csv(dir / "modes.csv", r.modes);
  write_slicenorms_csv(dir / "slicenorms.csv", r.modes, times);
  write_regimes_csv(dir / "regimes.csv", r.profiles, r.spatial, times);
  write_profile_transforms_csv(dir / "profiles.csv", r.modes, r.spatial, times);
  std::ostringstream fit;
  fit << "k,p_hat,t_hat,cosine_slope,decay_rate,r2_cosine,r2_decay\n";
  for (std::size_t j = 0; j < r.spatial.size(); ++j) {
    if (!r.fits[j]) continue;
    const auto& f = *r.fits[j];
    fit << r.spatial[j] + 1 << ',' << io::format_double(f.p_hat) << ','
        << io::format_double(times.front() + f.p_hat * tau) << ','
        << io::format_double(f.cosine_slope) << ',' << io::format_double(f.decay_rate) << ','
        << io::format_double(f.r2_cosine) << ',' << io::format_double(f.r2_decay) << '\n';
  }
  io::write_text(dir / "surrogate_fit.csv", fit.str());
  return r;
}

namespace {

std::vector<std::size_t> export_slices(const PipelineConfig& config, std::size_t num_slices) {
  if (!config.seba_slices.empty()) {
    for (std::size_t i : config.seba_slices)
      if (i >= num_slices) throw DomainError("seba slice index out of range");
    return config.seba_slices;
  }
  return {0, (num_slices - 1) / 2, num_slices - 1};
}

}  // namespace

SebaBasis seba_run(const PipelineConfig& config, const StoredSpectrum& stored,
                   const AnalysisResult& analysis, const TrajectoryEnsemble& ensemble,
                   const fs::path& dir) {
  if (analysis.spatial.size() < config.seba_modes)
    throw DomainError("only " + std::to_string(analysis.spatial.size()) +
                      " spatial modes available for SEBA");
  const std::size_t N = stored.num_nodes, T1 = stored.num_slices;
  Eigen::MatrixXd input(static_cast<Eigen::Index>(N * T1),
                        static_cast<Eigen::Index>(config.seba_modes));
  for (std::size_t c = 0; c < config.seba_modes; ++c)
    input.col(static_cast<Eigen::Index>(c)) = analysis.modes[analysis.spatial[c]].values;
  auto basis = seba(input);

  fs::create_directories(dir);
  const auto n = static_cast<Eigen::Index>(N);
  for (std::size_t idx : export_slices(config, T1)) {
    std::ostringstream out;
    out << "x,y";
    for (std::size_t c = 0; c < config.seba_modes; ++c) out << ",S" << c + 1;
    out << ",Smax,Smax_t0\n";
    const auto offset = static_cast<Eigen::Index>(idx) * n;
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vec2 p = ensemble.position(idx, static_cast<std::size_t>(k));
      out << io::format_double(p.x) << ',' << io::format_double(p.y);
      for (Eigen::Index c = 0; c < basis.sparse.cols(); ++c)
        out << ',' << io::format_double(basis.sparse(offset + k, c));
      out << ',' << io::format_double(basis.s_max[offset + k]) << ','
          << io::format_double(basis.s_max[k]) << '\n';
    }
    io::write_text(dir / ("seba_t" + std::to_string(idx) + ".csv"), out.str());
  }
  return basis;
}

bool RunReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

json checks_to_json(const std::vector<CheckResult>& checks) {
  json out = json::array();
  for (const auto& c : checks)
    out.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit}});
  return out;
}

json stages_to_json(const std::vector<StageRecord>& stages) {
  json out = json::array();
  for (const auto& s : stages)
    out.push_back({{"name", s.name}, {"seconds", s.seconds}, {"cached", s.cached}});
  return out;
}

double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

double asymmetry(const SparseMatrix& A) {
  const SparseMatrix diff = A - SparseMatrix(A.transpose());
  return max_abs(diff);
}

std::vector<CheckResult> pencil_checks(const InflatedSystem& sys,
                                       std::span<const SliceOperators> slices, double area) {
  std::vector<CheckResult> out;
  out.push_back({"pencil_symmetry", false, std::max(asymmetry(sys.D), asymmetry(sys.M())), 0.0});
  out.back().passed = out.back().value == 0.0;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sys.D.rows());
  const double scale = std::max(max_abs(sys.D), 1.0);
  out.push_back({"constant_nullspace", false, (sys.D * ones).cwiseAbs().maxCoeff() / scale, 1e-10});
  out.back().passed = out.back().value <= out.back().limit;
  double worst = 0.0;
  const Eigen::VectorXd n1 = Eigen::VectorXd::Ones(slices.front().mass.rows());
  for (const auto& s : slices) worst = std::max(worst, std::abs(n1.dot(s.mass * n1) - area) / area);
  out.push_back({"mass_totals", worst <= 1e-8, worst, 1e-8});
  return out;
}

std::vector<CheckResult> spectrum_checks(const SpectrumResult& s, const AnalysisResult& a,
                                         double tol) {
  std::vector<CheckResult> out;
  const double worst = s.residuals.empty()
                           ? 0.0
                           : *std::max_element(s.residuals.begin(), s.residuals.end());
  out.push_back({"eigen_residuals", worst <= tol, worst, tol});
  const double lead = std::abs(s.eigenvalues.front());
  const double scale = s.size() > 1 ? std::abs(s.eigenvalues[1]) : 1.0;
  out.push_back({"leading_mode_constant",
                 a.modes.front().label == ModeLabel::spatial && lead <= 1e-8 * scale, lead,
                 1e-8 * scale});
  double spread = 0.0;
  for (std::size_t k : a.spatial) {
    const auto& m = a.modes[k];
    const auto [lo, hi] = std::minmax_element(m.slice_means.begin(), m.slice_means.end());
    const double norm = std::sqrt(*std::max_element(m.slice_norms.begin(), m.slice_norms.end()));
    spread = std::max(spread, (*hi - *lo) / norm);
  }
  out.push_back({"spatial_mean_constancy", spread < 0.05, spread, 0.05});
  return out;
}

json spectrum_json(const SpectrumResult& s, const std::vector<EigenMode>& modes) {
  json out = json::array();
  for (std::size_t k = 0; k < s.size(); ++k)
    out.push_back({{"k", k + 1},
                   {"lambda", s.eigenvalues[k]},
                   {"residual", s.residuals[k]},
                   {"label", s.labels[k]},
                   {"variance", modes[k].slice_mean_variance}});
  return out;
}

EigsOptions eigs_options(const PipelineConfig& config) {
  EigsOptions o;
  o.count = config.modes;
  o.tol = config.tol;
  o.seed = config.seed;
  o.verbose = config.verbose;
  return o;
}

void write_summary(const fs::path& dir, const json& summary) {
  fs::create_directories(dir);
  io::write_text(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  auto& log = report.stages;
  const auto ensemble = obtain_trajectories(config, log);
  const auto slices = obtain_slices(config, ensemble, log);
  const std::vector<double> times(ensemble.times().begin(), ensemble.times().end());
  const double a = resolve_a(config, ensemble);

  const auto system = run_stage(log, "inflate", [&] {
    return assemble_inflated(slices, a, times, config.mass_mode());
  });
  StoredSpectrum stored;
  stored.a = a;
  stored.num_slices = times.size();
  stored.num_nodes = ensemble.num_trajectories();
  stored.spectrum = run_stage(log, "eigs", [&] { return solve_pencil(system, eigs_options(config)); });
  const auto analysis = run_stage(log, "analyze", [&] {
    return analyze_run(config, stored, slices, times, config.output);
  });
  save_spectrum(config.output, stored);
  const auto basis = run_stage(log, "seba", [&] {
    return seba_run(config, stored, analysis, ensemble, config.output);
  });

  report.checks = pencil_checks(system, slices, ensemble.domain().area());
  for (auto& c : spectrum_checks(stored.spectrum, analysis, config.tol))
    report.checks.push_back(std::move(c));
  report.checks.push_back(
      {"seba_orthogonality", basis.orthogonality_error <= 1e-10, basis.orthogonality_error, 1e-10});

  json& s = report.summary;
  s["version"] = library_version();
  s["config"] = config.to_json();
  s["a"] = a;
  s["a_source"] = config.a ? "explicit" : "auto";
  s["num_nodes"] = stored.num_nodes;
  s["num_slices"] = stored.num_slices;
  s["dimension"] = system.dimension();
  s["spectrum"] = spectrum_json(stored.spectrum, analysis.modes);
  s["solver"] = {{"shift", stored.spectrum.shift},
                 {"tolerance", stored.spectrum.tolerance},
                 {"operator_applications", stored.spectrum.operator_applications},
                 {"restarts", stored.spectrum.restarts},
                 {"probes", stored.spectrum.probes}};
  json fits = json::array();
  for (std::size_t j = 0; j < analysis.spatial.size(); ++j) {
    if (!analysis.fits[j]) continue;
    const auto& f = *analysis.fits[j];
    fits.push_back({{"k", analysis.spatial[j] + 1},
                    {"p_hat", f.p_hat},
                    {"t_hat", times.front() + f.p_hat * (times.back() - times.front())},
                    {"decay_rate", f.decay_rate},
                    {"r2_cosine", f.r2_cosine},
                    {"r2_decay", f.r2_decay}});
  }
  s["profile_fits"] = fits;
  s["seba"] = {{"modes", config.seba_modes},
               {"iterations", basis.iterations},
               {"converged", basis.converged},
               {"orthogonality_error", basis.orthogonality_error},
               {"zero_fraction", basis.zero_fraction},
               {"min_over_max", basis.min_over_max}};
  s["stages"] = stages_to_json(log);
  s["checks"] = checks_to_json(report.checks);
  s["ok"] = report.ok();
  s["seconds"] = elapsed(start);
  write_summary(config.output, s);
  return report;
}

RunReport run_sweep(const PipelineConfig& config) {
  config.validate();
  if (config.sweep_a.empty()) throw DomainError("sweep needs at least one value of a");
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  auto& log = report.stages;
  const auto ensemble = obtain_trajectories(config, log);
  const auto slices = obtain_slices(config, ensemble, log);
  const std::vector<double> times(ensemble.times().begin(), ensemble.times().end());
  const double tau = ensemble.duration();
  const auto base = run_stage(log, "inflate", [&] {
    return build_inflated_base(slices, tau, config.mass_mode());
  });
  const SliceQuadrature quadrature{times, slice_masses(slices, config.mass_mode())};

  std::ostringstream csv;
  csv << "a,k,lambda,label\n";
  std::vector<std::vector<double>> spatial;
  json per_a = json::array();
  double worst = 0.0;
  for (double a : config.sweep_a) {
    const auto sys = inflate(base, a);
    auto spectrum = run_stage(log, "eigs a=" + io::format_double(a),
                              [&] { return solve_pencil(sys, eigs_options(config)); });
    const auto modes = analyze_spectrum(spectrum, base->mass, quadrature,
                                        {config.spatial_threshold, config.temporal_threshold});
    std::vector<double> values;
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      csv << io::format_double(a) << ',' << k + 1 << ',' << io::format_double(spectrum.eigenvalues[k])
          << ',' << spectrum.labels[k] << '\n';
      if (modes[k].label == ModeLabel::spatial) values.push_back(spectrum.eigenvalues[k]);
      worst = std::max(worst, spectrum.residuals[k]);
    }
    spatial.push_back(values);
    per_a.push_back({{"a", a}, {"eigenvalues", spectrum.eigenvalues}, {"labels", spectrum.labels}});
  }
  fs::create_directories(config.output);
  io::write_text(config.output / "sweep.csv", csv.str());

  const auto dynamic = run_stage(log, "dynamic", [&] {
    EigsOptions o = eigs_options(config);
    o.count = std::min<std::size_t>(config.modes, slices.front().mass.rows());
    return solve_pencil(assemble_dynamic_laplacian(slices, times), o);
  });
  const std::size_t bound_count = std::min<std::size_t>(4, dynamic.size());
  EigBoundsOptions bounds;
  bounds.monotonicity_tol = 2 * config.tol;
  bounds.limit_tol = 0.05;
  const auto eig = verify_eigbounds(
      config.sweep_a, spatial,
      std::vector<double>(dynamic.eigenvalues.begin(),
                          dynamic.eigenvalues.begin() + static_cast<std::ptrdiff_t>(bound_count)),
      bounds);
  json rows = json::array();
  for (const auto& r : eig.rows)
    rows.push_back({{"k", r.k},
                    {"dynamic", r.dynamic},
                    {"spatial", r.spatial},
                    {"lower_bound_ok", r.lower_bound_ok},
                    {"monotone_ok", r.monotone_ok},
                    {"limit_ok", r.limit_ok}});
  const json eig_json = {{"a_values", eig.a_values},
                         {"dynamic", dynamic.eigenvalues},
                         {"rows", rows},
                         {"violations", eig.violations}};
  io::write_text(config.output / "eigbounds.json", eig_json.dump(2) + "\n");

  report.checks.push_back({"eigbounds", eig.ok(), static_cast<double>(eig.violations.size()), 0});
  report.checks.push_back({"eigen_residuals", worst <= config.tol, worst, config.tol});
  json& s = report.summary;
  s["version"] = library_version();
  s["config"] = config.to_json();
  s["sweep"] = per_a;
  s["eigbounds"] = eig_json;
  s["stages"] = stages_to_json(log);
  s["checks"] = checks_to_json(report.checks);
  s["ok"] = report.ok();
  s["seconds"] = elapsed(start);
  write_summary(config.output, s);
  return report;
}

}  // namespace coherence
