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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stoec/cli_io.hpp"

namespace {

namespace fs = std::filesystem;
using stoec::Json;

const std::string kScenarioDir = STOEC_SCENARIO_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stoec_test_" + name);
  fs::remove_all(dir);
  return dir;
}

Json small_scenario() {
  return Json::parse(R"({
    "domain": {"lengths": [40, 30], "resolution": [40, 30]},
    "density": {"gmm": [{"mean": [20, 15], "covariance": [[30, 0], [0, 20]], "weight": 1.0}]},
    "robots": [{"initial_state": [5, 5, 0.5], "bounds": {"v": [0.1, 2], "w": [-0.2, 0.2]}}],
    "stages": 2, "horizon": 10, "primitives": 2, "dt": 0.5, "k_max": 4,
    "cem": {"samples": 12, "elite_fraction": 0.25, "max_iterations": 4, "seed": 3}
  })");
}

std::string error_of(const Json& j) {
  try {
    stoec::parse_scenario(j);
  } catch (const stoec::ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Scenario, LoadsTheShippedExample) {
  const auto s = stoec::load_scenario(kScenarioDir + "/fig1.scenario");
  const auto& c = s.config;
  EXPECT_EQ(c.domain, stoec::DomainSpec(100, 100, 100, 100));
  EXPECT_EQ(c.density.gmm.size(), 3u);
  ASSERT_EQ(c.robots.size(), 1u);
  EXPECT_EQ(c.robots[0].initial_state, (stoec::RobotState{12, 40, 0.3}));
  EXPECT_EQ(c.stages, 20);
  EXPECT_EQ(c.primitives, 5);
  EXPECT_EQ(c.cem.seed, 7u);
  EXPECT_EQ(c.cem.samples, 40);
  EXPECT_FALSE(c.goal.enabled);
  EXPECT_EQ(s.output_dir, "runs/fig1");
}

TEST(Scenario, DefaultsApplyWhenKeysAreOmitted) {
  const auto s = stoec::parse_scenario(Json::parse(R"({
    "density": {"gmm": [{"mean": [50, 50], "covariance": [[100, 0], [0, 100]], "weight": 1}]},
    "robots": [{"initial_state": [10, 10, 0]}]
  })"));
  const stoec::MissionConfig defaults;
  EXPECT_EQ(s.config.domain, defaults.domain);
  EXPECT_EQ(s.config.stages, defaults.stages);
  EXPECT_EQ(s.config.horizon, defaults.horizon);
  EXPECT_EQ(s.config.cem, defaults.cem);
  EXPECT_TRUE(s.config.terminal_loiter);
  EXPECT_EQ(s.config.restarts, defaults.restarts);
  EXPECT_EQ(s.config.robots[0].bounds, stoec::InputBounds{});
  EXPECT_TRUE(std::holds_alternative<stoec::DiracFootprint>(s.config.robots[0].footprint));
}

TEST(Scenario, ErrorsNameTheOffendingKey) {
  auto j = small_scenario();
  j["robots"][0]["bounds"]["v"] = {3.0, 1.0};
  EXPECT_NE(error_of(j).find("robots[0].bounds.v"), std::string::npos);

  j = small_scenario();
  j["robots"][0]["speed"] = 1;
  EXPECT_NE(error_of(j).find("robots[0].speed"), std::string::npos);

  j = small_scenario();
  j["goal"] = {{"alpha", 2.0}};
  EXPECT_NE(error_of(j).find("goal.state"), std::string::npos);

  j = small_scenario();
  j.erase("density");
  EXPECT_NE(error_of(j).find("density"), std::string::npos);

  j = small_scenario();
  j["dt"] = 0.3;
  EXPECT_NE(error_of(j).find("dt"), std::string::npos);

  j = small_scenario();
  j["density"]["gmm"][0]["weight"] = 0.7;
  EXPECT_NE(error_of(j).find("weights"), std::string::npos);

  j = small_scenario();
  j["obstacles"] = Json::parse(R"([{"type": "polygon", "vertices": [[0, 0], [0, 1], [1, 1]]}])");
  EXPECT_NE(error_of(j).find("obstacles[0]"), std::string::npos);

  j = small_scenario();
  j["terminal_loiter"] = 1;
  EXPECT_NE(error_of(j).find("terminal_loiter"), std::string::npos);

  j = small_scenario();
  j["restarts"] = -1;
  EXPECT_NE(error_of(j).find("restarts"), std::string::npos);
}

TEST(Scenario, GoalSectionEnablesTheGoalTerm) {
  auto j = small_scenario();
  j["goal"] = {{"state", {30, 20, 1.0}}, {"alpha", 5.0}};
  const auto s = stoec::parse_scenario(j);
  EXPECT_TRUE(s.config.goal.enabled);
  EXPECT_EQ(s.config.goal.alpha, 5.0);
  EXPECT_EQ(s.config.goal.heading_weight, 0.0);
}

TEST(Scenario, ResolvedConfigRoundTrips) {
  auto j = small_scenario();
  j["robots"].push_back(Json::parse(R"({"initial_state": [30, 20, -1],
      "footprint": {"type": "gaussian", "covariance": [[4, 1], [1, 3]]}, "body_radius": 0.5})"));
  j["robots"].push_back(Json::parse(
      R"({"initial_state": [10, 25, 2], "footprint": {"type": "beam", "radius": 6, "view_angle": 1.2}})"));
  j["obstacles"] = Json::parse(R"([{"type": "circle", "center": [20, 20], "radius": 2},
      {"type": "polygon", "vertices": [[30, 5], [35, 5], [33, 9]]}])");
  j["goal"] = {{"state", {30, 20, 1.0}}, {"alpha", 5.0}, {"heading_weight", 0.5}};
  j["objective"] = "ergodic";
  j["index_norm"] = "sum";
  j["terminal_loiter"] = false;
  j["restarts"] = 0;
  const auto s = stoec::parse_scenario(j);
  EXPECT_FALSE(s.config.terminal_loiter);
  EXPECT_EQ(s.config.restarts, 0);
  const auto resolved = stoec::resolved_config(s);
  const auto back = stoec::parse_scenario(resolved);
  EXPECT_EQ(back.config, s.config);
  EXPECT_EQ(back.output_dir, s.output_dir);
  EXPECT_EQ(stoec::resolved_config(back), resolved);
}

TEST(Scenario, GridFileDensityResolvesRelativeToTheScenario) {
  const auto dir = scratch("gridfile");
  fs::create_directories(dir);
  const stoec::DomainSpec d(40, 30, 40, 30);
  const auto xi = stoec::build_gmm_density(
      d, std::vector<stoec::GmmComponent>{{{10, 10}, Eigen::Matrix2d::Identity() * 20.0, 1.0}});
  stoec::write_grid_file((dir / "target.grid").string(), xi);
  auto j = small_scenario();
  j["density"] = {{"grid_file", "target.grid"}};
  {
    std::ofstream out(dir / "s.scenario");
    out << j.dump(2);
  }
  const auto s = stoec::load_scenario((dir / "s.scenario").string());
  const auto target = stoec::build_target_density(s.config);
  for (std::size_t c = 0; c < d.cell_count(); ++c) EXPECT_NEAR(target[c], xi[c], 1e-12);
  fs::remove_all(dir);
}

TEST(ConcatenateStages, DropsRepeatedSamples) {
  const stoec::ParamVector z({1.0, 0.1}, stoec::InputBounds{}, 1.0);
  const auto a = stoec::rollout({5, 5, 0}, z, 0.5);
  const auto b = stoec::rollout(a.final_state(), z, 0.5);
  const auto joined = stoec::concatenate_stages({a, b});
  ASSERT_EQ(joined.size(), 5u);
  EXPECT_DOUBLE_EQ(joined.duration(), 2.0);
  EXPECT_DOUBLE_EQ(joined.samples()[3].t, 1.5);
  EXPECT_EQ(joined.samples()[4].state, b.final_state());
}

TEST(Run, WritesArtifactsAndReproducesMetrics) {
  const auto dir = scratch("run");
  const auto s = stoec::parse_scenario(small_scenario());
  const auto art = stoec::run(s, dir, {.record_timing = false, .write_traces = true});
  EXPECT_EQ(art.exit_code, 0);
  for (const char* name : {"resolved_config.json", "xi.grid", "gamma.grid", "accumulator.grid",
                           "metrics.csv", "overview.svg", "trajectory_robot0.csv",
                           "trace_s1_r0.csv", "trace_s2_r0.csv"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  std::ifstream metrics(dir / "metrics.csv");
  std::string line;
  int rows = -1;
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 2);

  const auto loaded = stoec::load_run(dir);
  EXPECT_EQ(loaded.scenario.config, s.config);
  const auto m = stoec::recompute_metrics(loaded);
  const auto& last = art.mission.metrics.back();
  EXPECT_NEAR(m.kl, last.kl, 1e-12);
  EXPECT_NEAR(m.bhattacharyya, last.bhattacharyya, 1e-12);
  EXPECT_NEAR(m.phi, last.phi, 1e-6 * last.phi);
  fs::remove_all(dir);
}

TEST(Run, RerunsAreByteIdenticalWithoutTiming) {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  const auto s = stoec::parse_scenario(small_scenario());
  stoec::run(s, a, {.record_timing = false});
  stoec::run(s, b, {.record_timing = false});
  for (const char* name : {"metrics.csv", "trajectory_robot0.csv", "accumulator.grid", "gamma.grid",
                           "overview.svg", "resolved_config.json"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, OneTrajectoryFilePerRobot) {
  const auto dir = scratch("three");
  auto j = small_scenario();
  j["robots"].push_back(Json::parse(R"({"initial_state": [35, 25, 3]})"));
  j["robots"].push_back(Json::parse(R"({"initial_state": [20, 5, 1.5]})"));
  j["stages"] = 1;
  const auto art = stoec::run(stoec::parse_scenario(j), dir, {.record_timing = false});
  EXPECT_EQ(art.trajectory_csvs.size(), 3u);
  EXPECT_EQ(art.mission.metrics.size(), 3u);
  for (int r = 0; r < 3; ++r) {
    std::ifstream in(dir / stoec::trajectory_csv_name(r));
    const auto rows = stoec::read_trajectory_csv(in);
    ASSERT_EQ(rows.size(), 21u);
    for (const auto& row : rows) EXPECT_EQ(row.robot, r);
  }
  fs::remove_all(dir);
}

TEST(Svg, ContainsLayersAndScaledCoordinates) {
  const stoec::DomainSpec d(100, 50, 4, 2);
  const auto xi = stoec::normalize({1, 2, 3, 4, 5, 6, 7, 8}, d);
  stoec::RenderInput in{xi,
                        {stoec::CircleObstacle{{50, 25}, 5}},
                        {{{0, 0}, {100, 50}}},
                        {{10, 20, 0}},
                        stoec::RobotState{90, 40, 0}};
  const auto svg = stoec::render_svg(in);
  EXPECT_EQ(stoec::svg_scale(d), 6.0);
  EXPECT_NE(svg.find("width=\"600\" height=\"300\""), std::string::npos);
  EXPECT_NE(svg.find("<circle cx=\"300\" cy=\"150\" r=\"30\"/>"), std::string::npos);
  EXPECT_NE(svg.find("points=\"0,300 600,0\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"goal\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"start\" cx=\"60\" cy=\"180\""), std::string::npos);
  // The densest cell is drawn black, the lightest never white.
  EXPECT_NE(svg.find("fill=\"rgb(0,0,0)\""), std::string::npos);
  EXPECT_EQ(svg.find("fill=\"rgb(255,255,255)\""), std::string::npos);
  int rects = 0;
  for (std::size_t p = svg.find("<rect x="); p != std::string::npos; p = svg.find("<rect x=", p + 1)) ++rects;
  EXPECT_EQ(rects, 8);
}

}  // namespace
