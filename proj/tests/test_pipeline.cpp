#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "coherence/io.hpp"
#include "coherence/pipeline.hpp"

using namespace coherence;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

PipelineConfig small_config(const std::string& name) {
  PipelineConfig c;
  c.seeds_x = c.seeds_y = 15;
  c.num_times = 21;
  c.modes = 8;
  c.output = fs::temp_directory_path() / ("coherence_test_pipeline_" + name);
  fs::remove_all(c.output);
  return c;
}

double stage_seconds(const RunReport& r, const std::string& name) {
  for (const auto& s : r.stages)
    if (s.name == name) return s.seconds;
  FAIL("missing stage " << name);
  return 0.0;
}

bool stage_cached(const RunReport& r, const std::string& name) {
  for (const auto& s : r.stages)
    if (s.name == name) return s.cached;
  return false;
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

}  // namespace

TEST_CASE("config round trip and schema errors") {
  PipelineConfig c;
  c.a = 0.25;
  c.sweep_a = {0.5, 1.0};
  c.seba_slices = {0, 3};
  const auto back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(*back.a == 0.25);

  CHECK_FALSE(PipelineConfig::from_json(nlohmann::json{{"a", "auto"}}).a.has_value());
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"a", "large"}}), SchemaError);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"unknown", 1}}), SchemaError);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"modes", "many"}}), SchemaError);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::array()), SchemaError);

  c.a = -1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("run writes its artifacts, resolves a = auto and reuses caches") {
  auto c = small_config("run");
  const auto first = run_pipeline(c);
  CHECK(first.ok());
  CHECK(first.summary["a"].get<double>() == doctest::Approx(2 / pi).epsilon(1e-15));
  CHECK(first.summary["a_source"] == "auto");
  for (const char* f : {"summary.json", "spectrum.json", "eigenvectors.bin", "spectrum.csv",
                        "modes.csv", "slicenorms.csv", "regimes.csv", "profiles.csv",
                        "surrogate_fit.csv", "seba_t0.csv", "seba_t10.csv", "seba_t20.csv"})
    CHECK_MESSAGE(fs::exists(c.output / f), f);
  CHECK(count_lines(c.output / "spectrum.csv") == c.modes + 1);
  CHECK_FALSE(stage_cached(first, "generate"));
  CHECK_FALSE(stage_cached(first, "assemble"));

  // Same config again: identical spectrum.
  const auto again = run_pipeline(c);
  CHECK(again.summary["spectrum"] == first.summary["spectrum"]);

  // A different a skips integration and assembly.
  c.a = 1.0;
  const auto other = run_pipeline(c);
  CHECK(stage_cached(other, "generate"));
  CHECK(stage_cached(other, "assemble"));
  const double fresh = stage_seconds(first, "generate") + stage_seconds(first, "assemble");
  const double reused = stage_seconds(other, "generate") + stage_seconds(other, "assemble");
  MESSAGE("integration + assembly " << fresh << " s, from cache " << reused << " s");
  CHECK(fresh >= 5 * reused);
  CHECK(other.summary["a"].get<double>() == 1.0);

  // Stored spectra load back bit for bit.
  const auto stored = load_spectrum(c.output);
  CHECK(stored.a == 1.0);
  CHECK(stored.spectrum.eigenvectors.rows() == 15 * 15 * 21);
  for (std::size_t k = 0; k < stored.spectrum.size(); ++k)
    CHECK(stored.spectrum.eigenvalues[k] == other.summary["spectrum"][k]["lambda"].get<double>());
}

TEST_CASE("sweep rows and the singleton sweep") {
  auto c = small_config("sweep");
  c.sweep_a = {0.5, 1.0, 2.0};
  const auto sweep = run_sweep(c);
  CHECK(count_lines(c.output / "sweep.csv") == 1 + c.sweep_a.size() * c.modes);
  CHECK(fs::exists(c.output / "eigbounds.json"));
  const auto& rows = sweep.summary["eigbounds"]["rows"];
  CHECK(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r["lower_bound_ok"].get<bool>());
    CHECK(r["monotone_ok"].get<bool>());
  }

  auto single = small_config("single");
  single.cache = c.cache_dir();
  single.sweep_a = {1.0};
  single.a = 1.0;
  const auto one = run_sweep(single);
  const auto run = run_pipeline(single);
  const auto& listed = one.summary["sweep"][0]["eigenvalues"];
  for (std::size_t k = 0; k < single.modes; ++k)
    CHECK(listed[k].get<double>() ==
          doctest::Approx(run.summary["spectrum"][k]["lambda"].get<double>()).epsilon(1e-12));
}

TEST_CASE("stage errors carry the stage name") {
  auto c = small_config("error");
  c.input = (c.output / "missing.json").string();
  try {
    run_pipeline(c);
    FAIL("expected a StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load_trajectories");
  }
}
