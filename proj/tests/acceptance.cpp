// Acceptance suite: one PASS/FAIL line per criterion.
#include <iostream>

#include <CLI11.hpp>

#include "coherence/acceptance.hpp"

int main(int argc, char** argv) {
  using namespace coherence;
  CLI::App app{"Acceptance criteria of the coherence library"};
  std::string profile = "ci";
  AcceptanceOptions options;
  app.add_option("--profile", profile, "ci (25x25 seeds, 51 times) or full (35x35, 101)")
      ->check(CLI::IsMember({"ci", "full"}));
  app.add_option("--only", options.only, "Criterion ids to run")->delimiter(',');
  app.add_option("--workdir", options.workdir, "Cache directory for trajectories and slices");
  app.add_flag("-v,--verbose", options.verbose, "Solver progress on stderr");
  CLI11_PARSE(app, argc, argv);
  options.profile = profile == "full" ? AcceptanceProfile::full : AcceptanceProfile::ci;

  const auto results = run_acceptance(options, [](const CriterionResult& r) {
    std::cout << format_result(r) << std::endl;
  });
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
