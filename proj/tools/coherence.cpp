// coherence: command-line driver for the inflated dynamic Laplacian pipeline.
#include <functional>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>

#include "coherence/acceptance.hpp"
#include "coherence/io.hpp"
#include "coherence/pipeline.hpp"

namespace fs = std::filesystem;
using namespace coherence;

namespace {

// Flags that mirror PipelineConfig keys. They are applied on top of the
// config file, and only when given on the command line.
class ConfigFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_path_, "Flat JSON config; flags override its keys")
        ->check(CLI::ExistingFile);
    add(app, "--input", input_, "'generate' or a trajectory manifest",
        [this](PipelineConfig& c) { c.input = input_; });
    add(app, "--grid", grid_, "Seed lattice NXxNY, e.g. 35x35", [this](PipelineConfig& c) {
      const auto x = grid_.find('x');
      long long nx = 0, ny = 0;
      if (x == std::string::npos || !io::parse_int(grid_.substr(0, x), nx) ||
          !io::parse_int(grid_.substr(x + 1), ny) || nx <= 0 || ny <= 0)
        throw SchemaError("--grid expects NXxNY");
      c.seeds_x = static_cast<std::size_t>(nx);
      c.seeds_y = static_cast<std::size_t>(ny);
    });
    add(app, "--times", times_, "Number of saved times", [this](PipelineConfig& c) { c.num_times = times_; });
    add(app, "--t0", t0_, "Initial time", [this](PipelineConfig& c) { c.t0 = t0_; });
    add(app, "--t1", t1_, "Final time", [this](PipelineConfig& c) { c.t1 = t1_; });
    add(app, "--substeps", substeps_, "RK4 substeps per save interval",
        [this](PipelineConfig& c) { c.substeps = substeps_; });
    add(app, "--reading", reading_, "Amplitude schedule reading: split or overlap",
        [this](PipelineConfig& c) { c.reading = reading_; });
    add(app, "--a", a_, "Temporal diffusion strength, or 'auto'", [this](PipelineConfig& c) {
      double v = 0;
      if (a_ == "auto") c.a.reset();
      else if (io::parse_double(a_, v)) c.a = v;
      else throw SchemaError("--a expects a number or 'auto'");
    });
    add(app, "--modes,-K", modes_, "Number of eigenpairs", [this](PipelineConfig& c) { c.modes = modes_; });
    add(app, "--tol", tol_, "Eigensolver residual tolerance", [this](PipelineConfig& c) { c.tol = tol_; });
    add(app, "--seed", seed_, "Eigensolver start vector seed", [this](PipelineConfig& c) { c.seed = seed_; });
    add(app, "--slice-mass", slice_mass_, "initial or per_slice",
        [this](PipelineConfig& c) { c.slice_mass = slice_mass_; });
    add(app, "--spatial-threshold", spatial_threshold_, "Variance below: spatial",
        [this](PipelineConfig& c) { c.spatial_threshold = spatial_threshold_; });
    add(app, "--temporal-threshold", temporal_threshold_, "Variance above: temporal",
        [this](PipelineConfig& c) { c.temporal_threshold = temporal_threshold_; });
    add(app, "--regime-threshold", regime_threshold_, "Neutral band of the local decay",
        [this](PipelineConfig& c) { c.regime_threshold = regime_threshold_; });
    add(app, "--seba-modes", seba_modes_, "Spatial modes passed to SEBA",
        [this](PipelineConfig& c) { c.seba_modes = seba_modes_; });
    add(app, "--seba-slices", seba_slices_, "Slice indices exported by SEBA",
        [this](PipelineConfig& c) { c.seba_slices = seba_slices_; })
        ->delimiter(',');
    add(app, "--sweep-a", sweep_a_, "Values of a for the sweep",
        [this](PipelineConfig& c) { c.sweep_a = sweep_a_; })
        ->delimiter(',');
    add(app, "--out,-o", output_, "Output directory", [this](PipelineConfig& c) { c.output = output_; });
    add(app, "--cache", cache_, "Cache directory (default <out>/cache)",
        [this](PipelineConfig& c) { c.cache = cache_; });
    add(app, "--threads", threads_, "Worker threads (0: all, capped by COHERENCE_THREADS)",
        [this](PipelineConfig& c) { c.threads = threads_; });
    app->add_flag("--check", check_, "Nonzero exit when a run check fails");
    app->add_flag("-v,--verbose", verbose_, "Progress on stderr");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path_.empty() ? PipelineConfig{} : load_config(config_path_);
    for (const auto& [option, apply] : appliers_)
      if (option->count() > 0) apply(c);
    c.check = c.check || check_;
    c.verbose = c.verbose || verbose_;
    c.validate();
    return c;
  }

 private:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& target, const std::string& help,
                   std::function<void(PipelineConfig&)> apply) {
    auto* option = app->add_option(name, target, help);
    appliers_.emplace_back(option, std::move(apply));
    return option;
  }

  std::string config_path_;
  std::string input_, grid_, reading_, a_, slice_mass_, output_, cache_;
  std::size_t times_ = 0, substeps_ = 0, modes_ = 0, seba_modes_ = 0, threads_ = 0;
  double t0_ = 0, t1_ = 0, tol_ = 0, spatial_threshold_ = 0, temporal_threshold_ = 0,
         regime_threshold_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> seba_slices_;
  std::vector<double> sweep_a_;
  bool check_ = false, verbose_ = false;
  std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> appliers_;
};

void print_stages(const std::vector<StageRecord>& log) {
  for (const auto& s : log)
    std::cerr << "  " << s.name << ": " << s.seconds << " s" << (s.cached ? " (cached)" : "") << '\n';
}

int report_checks(const RunReport& report, bool check) {
  for (const auto& c : report.checks)
    std::cout << (c.passed ? "ok   " : "FAIL ") << c.name << " = " << io::format_double(c.value)
              << " (limit " << io::format_double(c.limit) << ")\n";
  return check && !report.ok() ? 3 : 0;
}

template <class F>
auto run_stage_plain(const std::string& name, F&& body) {
  std::vector<StageRecord> log;
  return run_stage(log, name, std::forward<F>(body));
}

struct Loaded {
  TrajectoryEnsemble ensemble;
  std::vector<SliceOperators> slices;
  std::vector<double> times;
};

Loaded load_inputs(const PipelineConfig& c, std::vector<StageRecord>& log) {
  Loaded l;
  l.ensemble = obtain_trajectories(c, log);
  l.slices = obtain_slices(c, l.ensemble, log);
  l.times.assign(l.ensemble.times().begin(), l.ensemble.times().end());
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-time coherent sets and their lifetimes from trajectory data"};
  app.set_version_flag("--version", library_version());
  app.require_subcommand(1);

  ConfigFlags flags;
  std::function<int()> action;

  auto* generate = app.add_subcommand("generate", "Integrate the Childress-Soward trajectories");
  flags.attach(generate);
  generate->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      const auto domain = DomainSpec::torus(2 * std::numbers::pi, 2 * std::numbers::pi);
      IntegrationOptions o;
      o.substeps = c.substeps;
      o.threads = c.threads;
      const auto times = uniform_times(c.t0, c.t1, c.num_times);
      const auto e = run_stage_plain("generate", [&] {
        return integrate_trajectories(
            ChildressSowardSchedule::partially_coherent(c.amplitude_reading()), domain,
            SeedGrid{c.seeds_x, c.seeds_y}, times, o);
      });
      fs::create_directories(c.output);
      std::cout << save_trajectories(e, c.output).string() << '\n';
      return 0;
    };
  });

  auto* assemble = app.add_subcommand("assemble", "Mesh every slice and cache its FEM matrices");
  flags.attach(assemble);
  assemble->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      std::vector<StageRecord> log;
      const auto l = load_inputs(c, log);
      print_stages(log);
      std::cout << l.slices.size() << " slices of " << l.ensemble.num_trajectories()
                << " nodes in " << (c.cache_dir() / "slices").string() << '\n';
      return 0;
    };
  });

  auto* eigs = app.add_subcommand("eigs", "Solve the inflated pencil; writes spectrum.json/csv");
  flags.attach(eigs);
  eigs->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      std::vector<StageRecord> log;
      const auto l = load_inputs(c, log);
      StoredSpectrum stored;
      stored.a = resolve_a(c, l.ensemble);
      stored.num_slices = l.times.size();
      stored.num_nodes = l.ensemble.num_trajectories();
      const auto sys = run_stage(log, "inflate", [&] {
        return assemble_inflated(l.slices, stored.a, l.times, c.mass_mode());
      });
      EigsOptions o;
      o.count = c.modes;
      o.tol = c.tol;
      o.seed = c.seed;
      o.verbose = c.verbose;
      stored.spectrum = run_stage(log, "eigs", [&] { return solve_pencil(sys, o); });
      save_spectrum(c.output, stored);
      write_spectrum_csv(c.output / "spectrum.csv", stored.spectrum);
      print_stages(log);
      std::cout << "a = " << io::format_double(stored.a) << '\n';
      for (std::size_t k = 0; k < stored.spectrum.size(); ++k)
        std::cout << k + 1 << ' ' << io::format_double(stored.spectrum.eigenvalues[k]) << '\n';
      return 0;
    };
  });

  auto* analyze = app.add_subcommand("analyze", "Classify modes, slice norms, regimes, fits");
  flags.attach(analyze);
  analyze->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      std::vector<StageRecord> log;
      const auto l = load_inputs(c, log);
      auto stored = load_spectrum(c.output);
      const auto r = run_stage(log, "analyze",
                               [&] { return analyze_run(c, stored, l.slices, l.times, c.output); });
      save_spectrum(c.output, stored);
      print_stages(log);
      for (std::size_t k = 0; k < r.modes.size(); ++k)
        std::cout << k + 1 << ' ' << io::format_double(r.modes[k].eigenvalue) << ' '
                  << to_string(r.modes[k].label) << ' '
                  << io::format_double(r.modes[k].slice_mean_variance) << '\n';
      return 0;
    };
  });

  auto* seba_cmd = app.add_subcommand("seba", "Sparse basis of the leading spatial modes");
  flags.attach(seba_cmd);
  seba_cmd->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      std::vector<StageRecord> log;
      const auto l = load_inputs(c, log);
      auto stored = load_spectrum(c.output);
      const auto r = analyze_run(c, stored, l.slices, l.times, c.output);
      const auto basis =
          run_stage(log, "seba", [&] { return seba_run(c, stored, r, l.ensemble, c.output); });
      print_stages(log);
      std::cout << "iterations " << basis.iterations << (basis.converged ? "" : " (not converged)")
                << ", orthogonality error " << io::format_double(basis.orthogonality_error) << '\n';
      return 0;
    };
  });

  SurrogateProblem sp;
  std::size_t samples = 201;
  fs::path surrogate_out = "surrogate.csv";
  auto* surrogate = app.add_subcommand("surrogate", "Dominant eigenpair of the 1D surrogate");
  surrogate->add_option("--z", sp.z, "Decay rate on the coherent part")->capture_default_str();
  surrogate->add_option("--Z", sp.Z, "Decay rate on the mixing part")->capture_default_str();
  surrogate->add_option("--p", sp.p, "Coherent fraction of the interval")->capture_default_str();
  surrogate->add_option("--a", sp.a, "Temporal diffusion strength")->capture_default_str();
  surrogate->add_option("--tau", sp.tau, "Interval length")->capture_default_str();
  surrogate->add_option("--samples", samples, "Profile samples")->capture_default_str();
  surrogate->add_option("--out,-o", surrogate_out, "CSV path")->capture_default_str();
  surrogate->callback([&] {
    action = [&] {
      const auto s = run_stage_plain("surrogate", [&] { return solve_dominant(sp); });
      write_surrogate_csv(surrogate_out, s, samples);
      std::cout << "nu0 = " << io::format_double(s.nu0) << '\n';
      return 0;
    };
  });

  auto* sweep = app.add_subcommand("sweep", "Spectra over a list of a with eigenvalue bounds");
  flags.attach(sweep);
  sweep->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      const auto report = run_sweep(c);
      print_stages(report.stages);
      for (const auto& v : report.summary["eigbounds"]["violations"])
        std::cout << "violation: " << v.get<std::string>() << '\n';
      return report_checks(report, c.check);
    };
  });

  auto* run = app.add_subcommand("run", "Whole pipeline into the output directory");
  flags.attach(run);
  run->callback([&] {
    action = [&] {
      const auto c = flags.resolve();
      const auto report = run_pipeline(c);
      print_stages(report.stages);
      std::cout << "a = " << io::format_double(report.summary["a"].get<double>()) << '\n';
      return report_checks(report, c.check);
    };
  });

  AcceptanceOptions acceptance;
  std::string profile = "ci";
  auto* check = app.add_subcommand("check", "Acceptance suite");
  check->add_option("--profile", profile, "ci or full")->check(CLI::IsMember({"ci", "full"}));
  check->add_option("--only", acceptance.only, "Criterion ids")->delimiter(',');
  check->add_option("--workdir", acceptance.workdir, "Cache directory")->capture_default_str();
  check->add_flag("-v,--verbose", acceptance.verbose, "Solver progress on stderr");
  check->callback([&] {
    action = [&] {
      acceptance.profile = profile == "full" ? AcceptanceProfile::full : AcceptanceProfile::ci;
      bool ok = true;
      run_acceptance(acceptance, [&](const CriterionResult& r) {
        std::cout << format_result(r) << std::endl;
        ok = ok && r.passed;
      });
      return ok ? 0 : 3;
    };
  });

  CLI11_PARSE(app, argc, argv);
  try {
    return action();
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
