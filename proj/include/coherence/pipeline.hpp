#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "coherence/analysis.hpp"
#include "coherence/eigs.hpp"
#include "coherence/errors.hpp"
#include "coherence/fem.hpp"
#include "coherence/flow.hpp"
#include "coherence/inflate.hpp"
#include "coherence/surrogate.hpp"

namespace coherence {

/// A module error annotated with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Flat configuration of one pipeline run. The JSON form uses the member
/// names as keys; "a" is a number or "auto".
struct PipelineConfig {
  /// "generate" integrates the partially coherent Childress-Soward flow;
  /// anything else is a trajectory manifest path.
  std::string input = "generate";
  std::size_t seeds_x = 35;
  std::size_t seeds_y = 35;
  std::size_t num_times = 101;
  double t0 = -1.0;
  double t1 = 1.0;
  std::string reading = "split";  // or "overlap"
  std::size_t substeps = 20;

  std::optional<double> a;  // empty: suggest_a
  std::size_t modes = 20;
  double tol = 1e-6;
  std::uint64_t seed = 20240601;
  std::string slice_mass = "initial";  // or "per_slice"

  double spatial_threshold = 0.1;
  double temporal_threshold = 0.5;
  double regime_threshold = 0.0;
  std::size_t seba_modes = 4;
  /// Slice indices exported by SEBA; empty picks first, middle and last.
  std::vector<std::size_t> seba_slices;
  std::vector<double> sweep_a;

  std::filesystem::path output = "coherence_out";
  std::filesystem::path cache;  // empty: <output>/cache
  std::size_t threads = 0;
  bool check = false;
  bool verbose = false;

  /// Throws SchemaError on unknown keys or wrong types.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws DomainError on inconsistent values.
  void validate() const;

  std::filesystem::path cache_dir() const { return cache.empty() ? output / "cache" : cache; }
  SliceMass mass_mode() const;
  ChildressSowardSchedule::AmplitudeReading amplitude_reading() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  bool cached = false;
};

/// Runs `body` as a named stage: times it and rethrows library errors as
/// StageError.
template <class F>
auto run_stage(std::vector<StageRecord>& log, const std::string& name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  const auto finish = [&] {
    log.push_back(
        {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
         false});
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      finish();
    } else {
      auto result = body();
      finish();
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

/// Trajectories for the config: loaded from the manifest, from the cache
/// when it holds the same generation parameters, or integrated and cached.
TrajectoryEnsemble obtain_trajectories(const PipelineConfig& config,
                                       std::vector<StageRecord>& log);

/// Slice matrices, reused from the cache when its fingerprint matches the
/// ensemble.
std::vector<SliceOperators> obtain_slices(const PipelineConfig& config,
                                          const TrajectoryEnsemble& ensemble,
                                          std::vector<StageRecord>& log);

double resolve_a(const PipelineConfig& config, const TrajectoryEnsemble& ensemble);

/// Eigenpairs with the metadata needed to analyze them later.
struct StoredSpectrum {
  double a = 0.0;
  std::size_t num_slices = 0;
  std::size_t num_nodes = 0;
  SpectrumResult spectrum;
};

/// spectrum.json plus eigenvectors.bin (column-major little-endian doubles).
void save_spectrum(const std::filesystem::path& dir, const StoredSpectrum& stored);
StoredSpectrum load_spectrum(const std::filesystem::path& dir);

struct AnalysisResult {
  std::vector<EigenMode> modes;
  std::vector<std::size_t> spatial;   // indices into modes
  std::vector<std::size_t> temporal;
  std::vector<RayleighProfiles> profiles;  // one per spatial mode
  std::vector<std::optional<ProfileFit>> fits;  // one per spatial mode
};

/// Normalization, labels, Rayleigh profiles and profile fits; writes
/// modes.csv, slicenorms.csv, regimes.csv, profiles.csv and
/// surrogate_fit.csv into `dir`.
AnalysisResult analyze_run(const PipelineConfig& config, StoredSpectrum& stored,
                           std::span<const SliceOperators> slices, std::span<const double> times,
                           const std::filesystem::path& dir);

/// SEBA on the constant mode and the leading spatial modes; writes
/// seba_t<idx>.csv per exported slice with positions at that time, the
/// sparse functions there, their maximum and the maximum at t0 carried along
/// the trajectories.
SebaBasis seba_run(const PipelineConfig& config, const StoredSpectrum& stored,
                   const AnalysisResult& analysis, const TrajectoryEnsemble& ensemble,
                   const std::filesystem::path& dir);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double limit = 0.0;
};

struct RunReport {
  nlohmann::json summary;
  std::vector<CheckResult> checks;
  std::vector<StageRecord> stages;
  bool ok() const;
};

/// Whole extraction: trajectories, slices, pencil, eigenpairs, analysis,
/// SEBA, summary.json. Idempotent for a fixed config.
RunReport run_pipeline(const PipelineConfig& config);

/// One spectrum per a (config.sweep_a, increasing) on shared slices, the
/// dynamic Laplacian reference and the eigenvalue-bound report; writes
/// sweep.csv (a, k, lambda, label), eigbounds.json and summary.json.
RunReport run_sweep(const PipelineConfig& config);

std::string library_version();

}  // namespace coherence
