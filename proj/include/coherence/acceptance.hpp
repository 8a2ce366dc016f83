#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace coherence {

/// `full` runs the Childress-Soward checks at 35 x 35 seeds and 101 times;
/// `ci` at 25 x 25 and 51 with the looser spectrum tolerances.
enum class AcceptanceProfile { ci, full };

struct AcceptanceOptions {
  AcceptanceProfile profile = AcceptanceProfile::ci;
  std::vector<int> only;  // criterion ids; empty runs all
  /// Trajectory and slice caches live here.
  std::filesystem::path workdir = "acceptance_work";
  bool verbose = false;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the acceptance criteria in id order. `on_result` sees each result as
/// soon as it is available. A criterion that throws is reported as failed
/// with the error message.
std::vector<CriterionResult> run_acceptance(
    const AcceptanceOptions& options,
    const std::function<void(const CriterionResult&)>& on_result = {});

/// One line: "PASS [n] name: detail (s)".
std::string format_result(const CriterionResult& result);

}  // namespace coherence
