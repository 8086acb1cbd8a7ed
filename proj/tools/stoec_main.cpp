// Copyright 2026 The stoec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// stoec: plan ergodic coverage missions, recompute metrics, render overviews.
//
//   stoec plan <scenario> [--seed N] [--out DIR] [--objective kl|ergodic]
//                         [--stages N] [--no-timing] [--trace]
//   stoec metrics <run dir>
//   stoec render <run dir> [--out FILE]

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "stoec/stoec.hpp"

namespace {

int run_plan(const std::string& scenario_path, std::optional<std::uint64_t> seed,
             std::optional<std::string> out, std::optional<std::string> objective,
             std::optional<int> stages, bool no_timing, bool trace) {
  auto scenario = stoec::load_scenario(scenario_path);
  auto& cfg = scenario.config;
  if (seed) cfg.cem.seed = *seed;
  if (objective) {
    if (*objective == "kl") cfg.objective = stoec::Objective::kKl;
    else cfg.objective = stoec::Objective::kErgodic;
  }
  if (stages) cfg.stages = *stages;
  if (out) scenario.output_dir = *out;
  cfg.validate();

  const auto artifacts =
      stoec::run(scenario, scenario.output_dir, {.record_timing = !no_timing, .write_traces = trace});
  const auto& metrics = artifacts.mission.metrics;
  for (const auto& row : metrics) {
    std::cout << "stage " << row.stage << " robot " << row.robot
              << "  phi=" << stoec::format_double(row.phi, 6)
              << "  kl=" << stoec::format_double(row.kl, 6)
              << "  bhattacharyya=" << stoec::format_double(row.bhattacharyya, 6)
              << "  constraint_min=" << stoec::format_double(row.constraint_min, 6) << '\n';
  }
  if (artifacts.mission.error) {
    std::cerr << "mission aborted: " << *artifacts.mission.error
              << " (partial results written to " << artifacts.directory.string() << ")\n";
  } else {
    std::cout << "artifacts written to " << artifacts.directory.string() << '\n';
  }
  return artifacts.exit_code;
}

int run_metrics(const std::string& dir) {
  const auto loaded = stoec::load_run(dir);
  const auto m = stoec::recompute_metrics(loaded);
  std::cout << "phi=" << stoec::format_double(m.phi, 17) << '\n'
            << "kl=" << stoec::format_double(m.kl, 17) << '\n'
            << "bhattacharyya=" << stoec::format_double(m.bhattacharyya, 17) << '\n';
  return 0;
}

int run_render(const std::string& dir, std::optional<std::string> out) {
  const auto loaded = stoec::load_run(dir);
  const std::filesystem::path path =
      out ? std::filesystem::path(*out) : std::filesystem::path(dir) / stoec::kOverviewName;
  std::ofstream file(path);
  if (!file) throw stoec::IoError("cannot write " + path.string());
  file << stoec::render_run(loaded);
  if (!file) throw stoec::IoError("write failed: " + path.string());
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ergodic coverage trajectory planning with the cross-entropy method"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> objective;
  std::optional<int> stages;
  bool no_timing = false;
  bool trace = false;
  auto* plan = app.add_subcommand("plan", "Plan a mission and write its artifacts");
  plan->add_option("scenario", scenario_path, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  plan->add_option("--seed", seed, "Override the CE seed");
  plan->add_option("--out", out, "Override the output directory");
  plan->add_option("--objective", objective, "Override the objective")
      ->check(CLI::IsMember({"kl", "ergodic"}));
  plan->add_option("--stages", stages, "Override the stage count")->check(CLI::PositiveNumber);
  plan->add_flag("--no-timing", no_timing, "Write wall_ms as 0 for byte-identical reruns");
  plan->add_flag("--trace", trace, "Write per-stage CE trace CSVs");

  std::string run_dir;
  auto* metrics = app.add_subcommand("metrics", "Recompute phi, KL and Bhattacharyya from a run directory");
  metrics->add_option("run_dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::optional<std::string> svg_out;
  auto* render = app.add_subcommand("render", "Render the SVG overview of a run directory");
  render->add_option("run_dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  render->add_option("--out", svg_out, "Output SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan) return run_plan(scenario_path, seed, out, objective, stages, no_timing, trace);
    if (*metrics) return run_metrics(run_dir);
    if (*render) return run_render(run_dir, svg_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
