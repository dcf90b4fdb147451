// SPDX-License-Identifier: MIT
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gconic/errors.hpp"
#include "scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gconic: g-expectation risk, conic pricing and market simulation"};
  app.require_subcommand(1);

  gconic::cli::RunOptions opt;
  std::string scenario;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run every job of a scenario file");
  run->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", opt.out_dir, "Artifact directory")->capture_default_str();
  run->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--strict", opt.strict, "Heuristic NONE_FOUND verdicts fail the job");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize the artifacts of a run");
  report->add_option("dir", report_dir, "Artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*report) {
    try {
      std::cout << gconic::cli::render_report(report_dir);
      return 0;
    } catch (const gconic::Error& e) {
      std::cerr << e.what() << "\n";
      return 2;
    }
  }

  if (seed_opt->count()) opt.seed = seed;
  try {
    const auto summary = gconic::cli::run_scenario_file(scenario, opt);
    for (const auto& j : summary.jobs) {
      std::printf("%-4s %-24s %s\n", j.passed ? "ok" : "FAIL", j.name.c_str(), j.type.c_str());
      for (const auto& f : j.failures) std::printf("     %s\n", f.c_str());
      for (const auto& w : j.warnings) std::printf("     warning: %s\n", w.c_str());
    }
    return summary.passed() ? 0 : 1;
  } catch (const gconic::ConfigInvalid& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}
