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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "stoec/common.hpp"
#include "stoec/domain_grid.hpp"
#include "stoec/dubins.hpp"
#include "stoec/footprint.hpp"
#include "stoec/planner.hpp"
#include "stoec/spectral.hpp"

namespace stoec {

using Json = nlohmann::json;

/// A mission plus where its artifacts go.
struct Scenario {
  MissionConfig config;
  std::string output_dir = "out";

  bool operator==(const Scenario&) const = default;
};

namespace detail {

class ScenarioReader {
 public:
  static void expect_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
  }

  static void allow_keys(const Json& j, const std::string& path,
                         std::initializer_list<const char*> keys) {
    expect_object(j, path);
    for (const auto& [key, value] : j.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
          keys.end()) {
        throw ConfigError("unknown key '" + join(path, key) + "'");
      }
    }
  }

  static const Json& require(const Json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ConfigError("missing required key '" + join(path, key) + "'");
    return j.at(key);
  }

  static double number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
  }

  static int integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<int>();
  }

  static std::vector<double> numbers(const Json& j, const std::string& path, std::size_t n) {
    if (!j.is_array() || j.size() != n) {
      throw ConfigError(path + ": expected an array of " + std::to_string(n) + " numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

  static Eigen::Matrix2d matrix2(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(path + ": expected a 2x2 matrix");
    Eigen::Matrix2d m;
    for (int r = 0; r < 2; ++r) {
      const auto row = numbers(j[r], path + "[" + std::to_string(r) + "]", 2);
      m(r, 0) = row[0];
      m(r, 1) = row[1];
    }
    return m;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

inline FootprintSpec parse_footprint(const Json& j, const std::string& path) {
  using R = ScenarioReader;
  R::expect_object(j, path);
  const auto& type = R::require(j, path, "type");
  if (!type.is_string()) throw ConfigError(path + ".type: expected a string");
  const auto name = type.get<std::string>();
  FootprintSpec spec;
  if (name == "dirac") {
    R::allow_keys(j, path, {"type"});
    spec = DiracFootprint{};
  } else if (name == "gaussian") {
    R::allow_keys(j, path, {"type", "covariance"});
    spec = GaussianFootprint{R::matrix2(R::require(j, path, "covariance"), path + ".covariance")};
  } else if (name == "beam") {
    R::allow_keys(j, path, {"type", "radius", "view_angle"});
    spec = BeamFootprint{R::number(R::require(j, path, "radius"), path + ".radius"),
                         R::number(R::require(j, path, "view_angle"), path + ".view_angle")};
  } else {
    throw ConfigError(path + ".type: unknown footprint '" + name + "' (dirac|gaussian|beam)");
  }
  try {
    validate_footprint(spec);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

inline Json footprint_json(const FootprintSpec& spec) {
  return std::visit(
      [](const auto& fp) -> Json {
        using T = std::decay_t<decltype(fp)>;
        if constexpr (std::is_same_v<T, DiracFootprint>) {
          return Json{{"type", "dirac"}};
        } else if constexpr (std::is_same_v<T, GaussianFootprint>) {
          const auto& c = fp.covariance;
          return Json{{"type", "gaussian"},
                      {"covariance", {{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}}}};
        } else {
          return Json{{"type", "beam"}, {"radius", fp.radius}, {"view_angle", fp.view_angle}};
        }
      },
      spec);
}

inline RobotState parse_state(const Json& j, const std::string& path) {
  const auto v = ScenarioReader::numbers(j, path, 3);
  return RobotState{v[0], v[1], v[2]};
}

inline Json state_json(const RobotState& q) { return Json::array({q.x, q.y, q.theta}); }

inline Obstacle parse_obstacle(const Json& j, const std::string& path) {
  using R = ScenarioReader;
  R::expect_object(j, path);
  const auto& type = R::require(j, path, "type");
  if (!type.is_string()) throw ConfigError(path + ".type: expected a string");
  const auto name = type.get<std::string>();
  Obstacle out;
  if (name == "circle") {
    R::allow_keys(j, path, {"type", "center", "radius"});
    const auto c = R::numbers(R::require(j, path, "center"), path + ".center", 2);
    out = CircleObstacle{{c[0], c[1]}, R::number(R::require(j, path, "radius"), path + ".radius")};
  } else if (name == "polygon") {
    R::allow_keys(j, path, {"type", "vertices"});
    const auto& vs = R::require(j, path, "vertices");
    if (!vs.is_array()) throw ConfigError(path + ".vertices: expected an array");
    PolygonObstacle poly;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const auto v = R::numbers(vs[i], path + ".vertices[" + std::to_string(i) + "]", 2);
      poly.vertices.emplace_back(v[0], v[1]);
    }
    out = std::move(poly);
  } else {
    throw ConfigError(path + ".type: unknown obstacle '" + name + "' (circle|polygon)");
  }
  try {
    validate_obstacle(out);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return out;
}

inline Json obstacle_json(const Obstacle& o) {
  if (const auto* c = std::get_if<CircleObstacle>(&o)) {
    return Json{{"type", "circle"}, {"center", {c->center.x(), c->center.y()}}, {"radius", c->radius}};
  }
  Json vs = Json::array();
  for (const auto& v : std::get<PolygonObstacle>(o).vertices) vs.push_back({v.x(), v.y()});
  return Json{{"type", "polygon"}, {"vertices", vs}};
}

}  // namespace detail

/// Parses a scenario document. Relative grid_file paths resolve against
/// base_dir. Every omitted optional key takes its documented default.
inline Scenario parse_scenario(const Json& root, const std::filesystem::path& base_dir = {}) {
  using R = detail::ScenarioReader;
  R::allow_keys(root, "", {"domain", "density", "density_floor", "robots", "obstacles",
                           "objective", "stages", "horizon", "primitives", "dt", "k_max",
                           "index_norm", "goal", "cem", "terminal_loiter", "restarts",
                           "output_dir"});
  Scenario scenario;
  MissionConfig& cfg = scenario.config;

  if (root.contains("domain")) {
    const auto& d = root.at("domain");
    R::allow_keys(d, "domain", {"lengths", "resolution"});
    const auto lengths = d.contains("lengths") ? R::numbers(d.at("lengths"), "domain.lengths", 2)
                                               : std::vector<double>{100.0, 100.0};
    std::vector<int> res{100, 100};
    if (d.contains("resolution")) {
      const auto& r = d.at("resolution");
      if (!r.is_array() || r.size() != 2) throw ConfigError("domain.resolution: expected [n1, n2]");
      res = {R::integer(r[0], "domain.resolution[0]"), R::integer(r[1], "domain.resolution[1]")};
    }
    try {
      cfg.domain = DomainSpec(lengths[0], lengths[1], res[0], res[1]);
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("domain: ") + e.what());
    }
  }

  const auto& density = R::require(root, "", "density");
  R::allow_keys(density, "density", {"gmm", "grid_file"});
  if (density.contains("gmm") == density.contains("grid_file")) {
    throw ConfigError("density: exactly one of 'gmm' or 'grid_file' is required");
  }
  if (density.contains("gmm")) {
    const auto& comps = density.at("gmm");
    if (!comps.is_array() || comps.empty()) throw ConfigError("density.gmm: expected a non-empty array");
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const std::string path = "density.gmm[" + std::to_string(i) + "]";
      R::allow_keys(comps[i], path, {"mean", "covariance", "weight"});
      const auto mean = R::numbers(R::require(comps[i], path, "mean"), path + ".mean", 2);
      GmmComponent c{{mean[0], mean[1]},
                     R::matrix2(R::require(comps[i], path, "covariance"), path + ".covariance"),
                     R::number(R::require(comps[i], path, "weight"), path + ".weight")};
      if (!detail::is_spd(c.covariance)) {
        throw ConfigError(path + ".covariance: not symmetric positive-definite");
      }
      if (!(c.weight >= 0.0)) throw ConfigError(path + ".weight: must be nonnegative");
      cfg.density.gmm.push_back(c);
    }
    double wsum = 0.0;
    for (const auto& c : cfg.density.gmm) wsum += c.weight;
    if (std::abs(wsum - 1.0) > 1e-6) throw ConfigError("density.gmm: weights must sum to 1");
  } else {
    const auto& f = density.at("grid_file");
    if (!f.is_string()) throw ConfigError("density.grid_file: expected a path string");
    std::filesystem::path p = f.get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    cfg.density.grid_file = p.lexically_normal().string();
  }
  if (root.contains("density_floor")) {
    cfg.density_floor = R::number(root.at("density_floor"), "density_floor");
    if (!(cfg.density_floor > 0.0 && cfg.density_floor < 1.0)) {
      throw ConfigError("density_floor: must lie in (0, 1)");
    }
  }

  const auto& robots = R::require(root, "", "robots");
  if (!robots.is_array() || robots.empty()) throw ConfigError("robots: expected a non-empty array");
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const std::string path = "robots[" + std::to_string(i) + "]";
    const auto& r = robots[i];
    R::allow_keys(r, path, {"initial_state", "footprint", "body_radius", "bounds"});
    RobotSpec spec;
    spec.initial_state = detail::parse_state(R::require(r, path, "initial_state"), path + ".initial_state");
    if (r.contains("footprint")) spec.footprint = detail::parse_footprint(r.at("footprint"), path + ".footprint");
    if (r.contains("body_radius")) {
      spec.body_radius = R::number(r.at("body_radius"), path + ".body_radius");
      if (!(spec.body_radius >= 0.0)) throw ConfigError(path + ".body_radius: must be nonnegative");
    }
    if (r.contains("bounds")) {
      const auto& b = r.at("bounds");
      R::allow_keys(b, path + ".bounds", {"v", "w"});
      if (b.contains("v")) {
        const auto v = R::numbers(b.at("v"), path + ".bounds.v", 2);
        if (!(v[0] <= v[1])) throw ConfigError(path + ".bounds.v: v_min exceeds v_max");
        spec.bounds.v_min = v[0];
        spec.bounds.v_max = v[1];
      }
      if (b.contains("w")) {
        const auto w = R::numbers(b.at("w"), path + ".bounds.w", 2);
        if (!(w[0] <= w[1])) throw ConfigError(path + ".bounds.w: w_min exceeds w_max");
        spec.bounds.w_min = w[0];
        spec.bounds.w_max = w[1];
      }
    }
    cfg.robots.push_back(std::move(spec));
  }

  if (root.contains("obstacles")) {
    const auto& obs = root.at("obstacles");
    if (!obs.is_array()) throw ConfigError("obstacles: expected an array");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      cfg.obstacles.push_back(detail::parse_obstacle(obs[i], "obstacles[" + std::to_string(i) + "]"));
    }
  }

  if (root.contains("objective")) {
    const auto& o = root.at("objective");
    const auto name = o.is_string() ? o.get<std::string>() : std::string();
    if (name == "kl") cfg.objective = Objective::kKl;
    else if (name == "ergodic") cfg.objective = Objective::kErgodic;
    else throw ConfigError("objective: expected 'kl' or 'ergodic'");
  }
  if (root.contains("stages")) cfg.stages = R::integer(root.at("stages"), "stages");
  if (root.contains("horizon")) cfg.horizon = R::number(root.at("horizon"), "horizon");
  if (root.contains("primitives")) cfg.primitives = R::integer(root.at("primitives"), "primitives");
  if (root.contains("dt")) cfg.dt = R::number(root.at("dt"), "dt");
  if (root.contains("k_max")) cfg.k_max = R::integer(root.at("k_max"), "k_max");
  if (root.contains("index_norm")) {
    const auto& o = root.at("index_norm");
    const auto name = o.is_string() ? o.get<std::string>() : std::string();
    if (name == "euclidean") cfg.index_norm = IndexNorm::kEuclidean;
    else if (name == "sum") cfg.index_norm = IndexNorm::kSum;
    else throw ConfigError("index_norm: expected 'euclidean' or 'sum'");
  }

  if (root.contains("terminal_loiter")) {
    const auto& t = root.at("terminal_loiter");
    if (!t.is_boolean()) throw ConfigError("terminal_loiter: expected true or false");
    cfg.terminal_loiter = t.get<bool>();
  }
  if (root.contains("restarts")) cfg.restarts = R::integer(root.at("restarts"), "restarts");

  if (root.contains("goal")) {
    const auto& g = root.at("goal");
    R::allow_keys(g, "goal", {"state", "alpha", "heading_weight"});
    cfg.goal.enabled = true;
    cfg.goal.state = detail::parse_state(R::require(g, "goal", "state"), "goal.state");
    if (g.contains("alpha")) cfg.goal.alpha = R::number(g.at("alpha"), "goal.alpha");
    if (g.contains("heading_weight")) {
      cfg.goal.heading_weight = R::number(g.at("heading_weight"), "goal.heading_weight");
    }
  }

  if (root.contains("cem")) {
    const auto& c = root.at("cem");
    R::allow_keys(c, "cem", {"samples", "elite_fraction", "max_iterations", "variance_floor",
                             "convergence_threshold", "seed", "components", "em_iterations"});
    auto& cem = cfg.cem;
    if (c.contains("samples")) cem.samples = R::integer(c.at("samples"), "cem.samples");
    if (c.contains("elite_fraction")) cem.elite_fraction = R::number(c.at("elite_fraction"), "cem.elite_fraction");
    if (c.contains("max_iterations")) cem.max_iterations = R::integer(c.at("max_iterations"), "cem.max_iterations");
    if (c.contains("variance_floor")) cem.variance_floor = R::number(c.at("variance_floor"), "cem.variance_floor");
    if (c.contains("convergence_threshold")) {
      cem.convergence_threshold = R::number(c.at("convergence_threshold"), "cem.convergence_threshold");
    }
    if (c.contains("seed")) {
      if (!c.at("seed").is_number_unsigned() && !c.at("seed").is_number_integer()) {
        throw ConfigError("cem.seed: expected a nonnegative integer");
      }
      if (c.at("seed").is_number_integer() && c.at("seed").get<std::int64_t>() < 0) {
        throw ConfigError("cem.seed: expected a nonnegative integer");
      }
      cem.seed = c.at("seed").get<std::uint64_t>();
    }
    if (c.contains("components")) cem.components = R::integer(c.at("components"), "cem.components");
    if (c.contains("em_iterations")) cem.em_iterations = R::integer(c.at("em_iterations"), "cem.em_iterations");
  }

  if (root.contains("output_dir")) {
    const auto& o = root.at("output_dir");
    if (!o.is_string()) throw ConfigError("output_dir: expected a path string");
    scenario.output_dir = o.get<std::string>();
  }

  try {
    cfg.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return scenario;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file: " + path);
  Json root;
  try {
    root = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_scenario(root, std::filesystem::path(path).parent_path());
}

/// Every field, defaults included; parse_scenario of the result reproduces
/// the same Scenario.
inline Json resolved_config(const Scenario& scenario) {
  const MissionConfig& cfg = scenario.config;
  Json root;
  root["domain"] = {{"lengths", {cfg.domain.length_x(), cfg.domain.length_y()}},
                    {"resolution", {cfg.domain.nx(), cfg.domain.ny()}}};
  if (!cfg.density.grid_file.empty()) {
    root["density"] = {{"grid_file", cfg.density.grid_file}};
  } else {
    Json comps = Json::array();
    for (const auto& c : cfg.density.gmm) {
      comps.push_back({{"mean", {c.mean.x(), c.mean.y()}},
                       {"covariance", {{c.covariance(0, 0), c.covariance(0, 1)},
                                       {c.covariance(1, 0), c.covariance(1, 1)}}},
                       {"weight", c.weight}});
    }
    root["density"] = {{"gmm", comps}};
  }
  root["density_floor"] = cfg.density_floor;
  Json robots = Json::array();
  for (const auto& r : cfg.robots) {
    robots.push_back({{"initial_state", detail::state_json(r.initial_state)},
                      {"footprint", detail::footprint_json(r.footprint)},
                      {"body_radius", r.body_radius},
                      {"bounds", {{"v", {r.bounds.v_min, r.bounds.v_max}},
                                  {"w", {r.bounds.w_min, r.bounds.w_max}}}}});
  }
  root["robots"] = robots;
  Json obstacles = Json::array();
  for (const auto& o : cfg.obstacles) obstacles.push_back(detail::obstacle_json(o));
  root["obstacles"] = obstacles;
  root["objective"] = cfg.objective == Objective::kKl ? "kl" : "ergodic";
  root["stages"] = cfg.stages;
  root["horizon"] = cfg.horizon;
  root["primitives"] = cfg.primitives;
  root["dt"] = cfg.dt;
  root["k_max"] = cfg.k_max;
  root["index_norm"] = cfg.index_norm == IndexNorm::kEuclidean ? "euclidean" : "sum";
  if (cfg.goal.enabled) {
    root["goal"] = {{"state", detail::state_json(cfg.goal.state)},
                    {"alpha", cfg.goal.alpha},
                    {"heading_weight", cfg.goal.heading_weight}};
  }
  root["terminal_loiter"] = cfg.terminal_loiter;
  root["restarts"] = cfg.restarts;
  root["cem"] = {{"samples", cfg.cem.samples},
                 {"elite_fraction", cfg.cem.elite_fraction},
                 {"max_iterations", cfg.cem.max_iterations},
                 {"variance_floor", cfg.cem.variance_floor},
                 {"convergence_threshold", cfg.cem.convergence_threshold},
                 {"seed", cfg.cem.seed},
                 {"components", cfg.cem.components},
                 {"em_iterations", cfg.cem.em_iterations}};
  root["output_dir"] = scenario.output_dir;
  return root;
}

// ---------------------------------------------------------------------------
// Artifacts.

/// Joins a robot's stage trajectories into one time line, dropping each
/// stage's first sample (it repeats the previous stage's last one).
inline Trajectory concatenate_stages(const std::vector<Trajectory>& stages) {
  if (stages.empty()) throw InvalidInput("concatenate_stages: no stages");
  std::vector<TrajectorySample> samples;
  double offset = 0.0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& src = stages[s].samples();
    for (std::size_t k = (s == 0 ? 0 : 1); k < src.size(); ++k) {
      auto sample = src[k];
      sample.t += offset;
      samples.push_back(sample);
    }
    offset += stages[s].duration();
  }
  return Trajectory(std::move(samples), stages.front().dt(), offset);
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, int robot) {
  write_trajectory_csv_header(out);
  for (const auto& s : traj.samples()) write_trajectory_csv_row(out, s, robot);
}

struct RenderInput {
  DensityGrid xi;
  std::vector<Obstacle> obstacles;
  std::vector<std::vector<Eigen::Vector2d>> paths;
  std::vector<RobotState> starts;
  std::optional<RobotState> goal;
};

inline constexpr double kSvgSize = 600.0;

/// Pixels per meter used by render_svg.
inline double svg_scale(const DomainSpec& domain) {
  return kSvgSize / std::max(domain.length_x(), domain.length_y());
}

/// Static overview: grayscale density raster (display-normalized so the
/// maximum is 1), obstacles, one polyline per robot, start and goal markers.
inline std::string render_svg(const RenderInput& input) {
  const auto& domain = input.xi.domain();
  const double scale = svg_scale(domain);
  const double width = domain.length_x() * scale;
  const double height = domain.length_y() * scale;
  auto px = [&](double x) { return format_double(x * scale, 6); };
  auto py = [&](double y) { return format_double((domain.length_y() - y) * scale, 6); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(width, 6)
      << "\" height=\"" << format_double(height, 6) << "\" viewBox=\"0 0 "
      << format_double(width, 6) << ' ' << format_double(height, 6) << "\">\n";

  const double peak = input.xi.max_value();
  svg << "<g id=\"density\" shape-rendering=\"crispEdges\">\n";
  for (int j = 0; j < domain.ny(); ++j) {
    for (int i = 0; i < domain.nx(); ++i) {
      const double level = peak > 0.0 ? input.xi.at(i, j) / peak : 0.0;
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(level, 0.0, 1.0))));
      svg << "<rect x=\"" << px(i * domain.cell_width()) << "\" y=\""
          << py((j + 1) * domain.cell_height()) << "\" width=\"" << px(domain.cell_width())
          << "\" height=\"" << format_double(domain.cell_height() * scale, 6)
          << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
    }
  }
  svg << "</g>\n<g id=\"obstacles\" fill=\"#b03030\" fill-opacity=\"0.8\">\n";
  for (const auto& o : input.obstacles) {
    if (const auto* c = std::get_if<CircleObstacle>(&o)) {
      svg << "<circle cx=\"" << px(c->center.x()) << "\" cy=\"" << py(c->center.y())
          << "\" r=\"" << format_double(c->radius * scale, 6) << "\"/>\n";
    } else {
      svg << "<polygon points=\"";
      bool first = true;
      for (const auto& v : std::get<PolygonObstacle>(o).vertices) {
        svg << (first ? "" : " ") << px(v.x()) << ',' << py(v.y());
        first = false;
      }
      svg << "\"/>\n";
    }
  }
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd",
                                            "#17becf", "#e377c2"};
  svg << "</g>\n<g id=\"trajectories\" fill=\"none\" stroke-width=\"1.2\">\n";
  for (std::size_t r = 0; r < input.paths.size(); ++r) {
    svg << "<polyline stroke=\"" << kColors[r % 6] << "\" points=\"";
    bool first = true;
    for (const auto& p : input.paths[r]) {
      svg << (first ? "" : " ") << px(p.x()) << ',' << py(p.y());
      first = false;
    }
    svg << "\"/>\n";
  }
  svg << "</g>\n<g id=\"markers\">\n";
  for (const auto& s : input.starts) {
    svg << "<circle class=\"start\" cx=\"" << px(s.x) << "\" cy=\"" << py(s.y)
        << "\" r=\"5\" fill=\"#00a000\"/>\n";
  }
  if (input.goal) {
    svg << "<rect class=\"goal\" x=\"" << format_double(input.goal->x * scale - 5.0, 6)
        << "\" y=\"" << format_double((domain.length_y() - input.goal->y) * scale - 5.0, 6)
        << "\" width=\"10\" height=\"10\" fill=\"#d00000\"/>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

struct RunOptions {
  bool record_timing = true;
  bool write_traces = false;
};

struct RunArtifacts {
  explicit RunArtifacts(MissionResult result) : mission(std::move(result)) {}

  std::filesystem::path directory;
  std::vector<std::filesystem::path> trajectory_csvs;
  std::filesystem::path xi_grid;
  std::filesystem::path gamma_grid;
  std::filesystem::path accumulator_grid;
  std::filesystem::path metrics_csv;
  std::filesystem::path overview_svg;
  std::filesystem::path resolved_config;
  MissionResult mission;
  int exit_code = 0;
};

inline constexpr const char* kResolvedConfigName = "resolved_config.json";
inline constexpr const char* kXiGridName = "xi.grid";
inline constexpr const char* kGammaGridName = "gamma.grid";
inline constexpr const char* kAccumulatorGridName = "accumulator.grid";
inline constexpr const char* kMetricsName = "metrics.csv";
inline constexpr const char* kOverviewName = "overview.svg";

inline std::string trajectory_csv_name(std::size_t robot) {
  return "trajectory_robot" + std::to_string(robot) + ".csv";
}

namespace detail {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  fn(out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

inline RenderInput render_input(const MissionConfig& cfg, const DensityGrid& xi,
                                const std::vector<Trajectory>& robot_paths) {
  RenderInput in{xi, cfg.obstacles, {}, {}, std::nullopt};
  for (const auto& traj : robot_paths) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(traj.size());
    for (const auto& s : traj.samples()) pts.emplace_back(s.state.x, s.state.y);
    in.paths.push_back(std::move(pts));
  }
  for (const auto& r : cfg.robots) in.starts.push_back(r.initial_state);
  if (cfg.goal.enabled) in.goal = cfg.goal.state;
  return in;
}

}  // namespace detail

/// Plans the mission and writes every artifact to out_dir. A failed mission
/// still writes whatever completed and reports exit_code 1.
inline RunArtifacts run(const Scenario& scenario, const std::filesystem::path& out_dir,
                        const RunOptions& options = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  const MissionConfig& cfg = scenario.config;
  const auto config_path = out_dir / kResolvedConfigName;
  detail::write_file(config_path,
                     [&](std::ostream& o) { o << resolved_config(scenario).dump(2) << '\n'; });

  RunArtifacts art(plan_mission(cfg));
  art.directory = out_dir;
  art.resolved_config = config_path;
  const auto& mission = art.mission;
  const auto& ctx = mission.context;

  art.xi_grid = out_dir / kXiGridName;
  detail::write_file(art.xi_grid, [&](std::ostream& o) { write_grid(o, ctx.xi); });
  art.accumulator_grid = out_dir / kAccumulatorGridName;
  detail::write_file(art.accumulator_grid,
                     [&](std::ostream& o) { write_accumulator(o, ctx.accumulator); });
  if (ctx.accumulator.total_time() > 0.0) {
    art.gamma_grid = out_dir / kGammaGridName;
    detail::write_file(art.gamma_grid, [&](std::ostream& o) { write_grid(o, to_pdf(ctx.accumulator)); });
  }
  art.metrics_csv = out_dir / kMetricsName;
  detail::write_file(art.metrics_csv, [&](std::ostream& o) {
    write_metrics_csv(o, mission.metrics, options.record_timing);
  });

  std::vector<Trajectory> paths;
  for (std::size_t r = 0; r < mission.stage_trajectories.size(); ++r) {
    if (mission.stage_trajectories[r].empty()) continue;
    paths.push_back(concatenate_stages(mission.stage_trajectories[r]));
    const auto path = out_dir / trajectory_csv_name(r);
    detail::write_file(path, [&](std::ostream& o) {
      write_trajectory_csv(o, paths.back(), static_cast<int>(r));
    });
    art.trajectory_csvs.push_back(path);
  }
  if (options.write_traces) {
    for (std::size_t r = 0; r < mission.diagnostics.size(); ++r) {
      for (std::size_t s = 0; s < mission.diagnostics[r].size(); ++s) {
        const auto path = out_dir / ("trace_s" + std::to_string(s + 1) + "_r" + std::to_string(r) + ".csv");
        detail::write_file(path, [&](std::ostream& o) {
          cem::write_trace_csv(o, mission.diagnostics[r][s].history);
        });
      }
    }
  }
  art.overview_svg = out_dir / kOverviewName;
  detail::write_file(art.overview_svg, [&](std::ostream& o) {
    o << render_svg(detail::render_input(cfg, ctx.xi, paths));
  });
  art.exit_code = mission.error ? 1 : 0;
  return art;
}

/// A run directory read back from disk.
struct LoadedRun {
  Scenario scenario;
  DensityGrid xi;
  std::optional<DensityGrid> gamma;
  std::vector<Trajectory> trajectories;
};

inline LoadedRun load_run(const std::filesystem::path& dir) {
  const auto config_path = dir / kResolvedConfigName;
  std::ifstream cin(config_path);
  if (!cin) throw IoError("cannot open " + config_path.string());
  Json root;
  try {
    root = Json::parse(cin);
  } catch (const Json::parse_error& e) {
    throw ConfigError(config_path.string() + ": " + e.what());
  }
  LoadedRun run{parse_scenario(root), read_grid_file((dir / kXiGridName).string()), std::nullopt, {}};
  if (std::filesystem::exists(dir / kGammaGridName)) {
    run.gamma = read_grid_file((dir / kGammaGridName).string());
  }
  for (std::size_t r = 0; r < run.scenario.config.robots.size(); ++r) {
    const auto path = dir / trajectory_csv_name(r);
    std::ifstream in(path);
    if (!in) continue;
    const auto rows = read_trajectory_csv(in);
    if (rows.empty()) continue;
    std::vector<TrajectorySample> samples;
    for (const auto& row : rows) samples.push_back(row.sample);
    run.trajectories.emplace_back(std::move(samples), run.scenario.config.dt);
  }
  return run;
}

/// Recomputes coverage metrics of a run directory from its dumps. Phi uses
/// the trajectory CSVs (point statistics), KL and Bhattacharyya the grids.
inline CoverageMetrics recompute_metrics(const LoadedRun& run) {
  if (!run.gamma) throw InvalidInput("run directory has no gamma grid");
  const auto& cfg = run.scenario.config;
  SpectralAccumulator spectral(cfg.domain, cfg.k_max);
  for (const auto& t : run.trajectories) spectral.add_trajectory(t);
  const auto xi_coeffs = density_coeffs(run.xi, cfg.k_max);
  return CoverageMetrics{ergodicity_metric(spectral.coefficients(), xi_coeffs, cfg.index_norm),
                         kl_divergence(*run.gamma, run.xi), bhattacharyya(*run.gamma, run.xi)};
}

inline std::string render_run(const LoadedRun& run) {
  return render_svg(detail::render_input(run.scenario.config, run.xi, run.trajectories));
}

}  // namespace stoec
