// SPDX-License-Identifier: MIT
// Scenario files: parsing, job execution and artifact rendering.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace gconic::cli {

using nlohmann::json;

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  int jobs = 1;
  bool strict = false;
};

struct JobOutcome {
  std::string name;
  std::string type;
  bool passed = true;
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<JobOutcome> jobs;
  bool passed() const;
};

/// Validates the whole scenario, then runs every job and writes one JSON
/// report per job (plus a CSV table for price and hedged jobs) and
/// summary.json into `out_dir`. Throws ConfigInvalid before any job runs.
RunSummary run_scenario(const json& config, const std::string& name, const RunOptions& opt);
RunSummary run_scenario_file(const std::string& path, const RunOptions& opt);

/// Sorted keys, two-space indent, floats at 12 significant digits.
std::string canonical_dump(const json& j);
std::string format_number(double v);

/// One text block per job listed in summary.json. Throws ArtifactMissing.
std::string render_report(const std::string& out_dir);

}  // namespace gconic::cli
