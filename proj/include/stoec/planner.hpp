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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "stoec/cem.hpp"
#include "stoec/common.hpp"
#include "stoec/domain_grid.hpp"
#include "stoec/dubins.hpp"
#include "stoec/footprint.hpp"
#include "stoec/spectral.hpp"

namespace stoec {

// ---------------------------------------------------------------------------
// Obstacles and the signed-distance constraint.

struct CircleObstacle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0;

  bool operator==(const CircleObstacle&) const = default;
};

/// Convex polygon with counter-clockwise vertices.
struct PolygonObstacle {
  std::vector<Eigen::Vector2d> vertices;

  bool operator==(const PolygonObstacle&) const = default;
};

using Obstacle = std::variant<CircleObstacle, PolygonObstacle>;

namespace detail {

inline double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

inline double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace detail

inline void validate_obstacle(const Obstacle& obstacle) {
  if (const auto* c = std::get_if<CircleObstacle>(&obstacle)) {
    if (!(c->radius > 0.0)) throw InvalidInput("CircleObstacle: radius must be positive");
    return;
  }
  const auto& v = std::get<PolygonObstacle>(obstacle).vertices;
  if (v.size() < 3) throw InvalidInput("PolygonObstacle: at least 3 vertices required");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    const auto& c = v[(i + 2) % v.size()];
    if (!(detail::cross(b - a, c - b) > 0.0)) {
      throw InvalidInput("PolygonObstacle: vertices must be convex, counter-clockwise and "
                         "non-collinear");
    }
  }
}

/// Signed distance from a disc body to an obstacle, negative on overlap.
inline double prox(const Eigen::Vector2d& position, double body_radius, const Obstacle& obstacle) {
  if (const auto* c = std::get_if<CircleObstacle>(&obstacle)) {
    return (position - c->center).norm() - c->radius - body_radius;
  }
  const auto& v = std::get<PolygonObstacle>(obstacle).vertices;
  bool inside = true;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    if (detail::cross(b - a, position - a) < 0.0) inside = false;
    dist = std::min(dist, detail::segment_distance(position, a, b));
  }
  return (inside ? -dist : dist) - body_radius;
}

inline double prox(const RobotState& state, double body_radius, const Obstacle& obstacle) {
  return prox(Eigen::Vector2d(state.x, state.y), body_radius, obstacle);
}

/// Distance from a position to the domain boundary, negative outside.
inline double domain_margin(const DomainSpec& domain, double x, double y) {
  return std::min({x, domain.length_x() - x, y, domain.length_y() - y});
}

/// Minimum over samples of the obstacle clearances and the domain margin.
inline double constraint_min(const Trajectory& traj, double body_radius,
                             std::span<const Obstacle> obstacles, const DomainSpec& domain) {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& s : traj.samples()) {
    const Eigen::Vector2d p(s.state.x, s.state.y);
    out = std::min(out, domain_margin(domain, p.x(), p.y()));
    for (const auto& o : obstacles) out = std::min(out, prox(p, body_radius, o));
  }
  return out;
}

/// Clearance of the tightest loiter circle (v_min with w at its extreme) on
/// either side of the heading, whichever is larger. A nonnegative value means
/// the robot can circle in place forever from this state, so the next stage
/// always has a feasible plan. The circle is checked as a disc, which is
/// conservative. Returns +inf when the bounds allow no turning.
inline double loiter_clearance(const RobotState& state, const InputBounds& bounds,
                               double body_radius, std::span<const Obstacle> obstacles,
                               const DomainSpec& domain) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (double w : {bounds.w_max, bounds.w_min}) {
    if (std::abs(w) < kStraightTurnRate) continue;
    any = true;
    const double r = bounds.v_min / std::abs(w);
    const double side = w > 0.0 ? 1.0 : -1.0;
    const Eigen::Vector2d c(state.x - side * r * std::sin(state.theta),
                            state.y + side * r * std::cos(state.theta));
    double clearance = domain_margin(domain, c.x(), c.y()) - r;
    for (const auto& o : obstacles) clearance = std::min(clearance, prox(c, body_radius + r, o));
    best = std::max(best, clearance);
  }
  return any ? best : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Mission configuration.

enum class Objective { kKl, kErgodic };

inline constexpr double kPenaltyOffset = 1e6;
inline constexpr double kPenaltyPerMeter = 1e6;

struct GoalTerm {
  bool enabled = false;
  RobotState state;
  double alpha = 1.0;
  double heading_weight = 0.0;

  bool operator==(const GoalTerm&) const = default;
};

struct RobotSpec {
  FootprintSpec footprint = DiracFootprint{};
  double body_radius = 0.0;
  InputBounds bounds;
  RobotState initial_state;

  bool operator==(const RobotSpec&) const = default;
};

/// Desired coverage density: a Gaussian mixture or a grid dump on disk.
struct DensitySource {
  std::vector<GmmComponent> gmm;
  std::string grid_file;

  bool operator==(const DensitySource& o) const {
    if (grid_file != o.grid_file || gmm.size() != o.gmm.size()) return false;
    for (std::size_t i = 0; i < gmm.size(); ++i) {
      if (gmm[i].mean != o.gmm[i].mean || gmm[i].covariance != o.gmm[i].covariance ||
          gmm[i].weight != o.gmm[i].weight) {
        return false;
      }
    }
    return true;
  }
};

struct MissionConfig {
  DomainSpec domain{100.0, 100.0, 100, 100};
  DensitySource density;
  std::vector<RobotSpec> robots;
  std::vector<Obstacle> obstacles;
  Objective objective = Objective::kKl;
  int stages = 20;
  double horizon = 50.0;
  int primitives = 5;
  double dt = 0.1;
  GoalTerm goal;
  cem::CemConfig cem;
  int k_max = kDefaultKMax;
  IndexNorm index_norm = IndexNorm::kEuclidean;
  double density_floor = 1e-10;
  /// Require every stage to end where a tightest-turn loiter circle fits.
  bool terminal_loiter = true;
  /// Extra CE runs, from fresh seeds, when a stage winner is infeasible.
  int restarts = 3;

  double primitive_duration() const { return horizon / primitives; }

  void validate() const {
    if (stages < 1) throw ConfigError("stages must be at least 1");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (primitives < 1) throw ConfigError("primitives must be at least 1");
    steps_per_primitive(primitive_duration(), dt);
    if (robots.empty()) throw ConfigError("at least one robot is required");
    for (const auto& r : robots) {
      if (!(r.body_radius >= 0.0)) throw ConfigError("robot body_radius must be nonnegative");
      r.bounds.validate();
      validate_footprint(r.footprint);
    }
    for (const auto& o : obstacles) validate_obstacle(o);
    if (goal.enabled && !(goal.alpha >= 0.0)) throw ConfigError("goal alpha must be nonnegative");
    if (!(goal.heading_weight >= 0.0)) throw ConfigError("goal heading_weight must be nonnegative");
    if (k_max < 0) throw ConfigError("k_max must be nonnegative");
    if (restarts < 0) throw ConfigError("restarts must be nonnegative");
    if (density.gmm.empty() == density.grid_file.empty()) {
      throw ConfigError("density needs exactly one of gmm components or grid_file");
    }
    cem.validate();
  }

  bool operator==(const MissionConfig&) const = default;
};

/// Builds (or loads) the desired density and applies the KL floor.
inline DensityGrid build_target_density(const MissionConfig& config) {
  if (!config.density.grid_file.empty()) {
    const auto raw = read_grid_file(config.density.grid_file);
    if (!(raw.domain() == config.domain)) {
      throw ConfigError("density grid file " + config.density.grid_file +
                        " does not match the configured domain");
    }
    const auto pdf = normalize({raw.values().begin(), raw.values().end()}, raw.domain());
    return floor_density(pdf, config.density_floor);
  }
  return floor_density(build_gmm_density(config.domain, config.density.gmm), config.density_floor);
}

// ---------------------------------------------------------------------------
// Stage context and cost.

/// Everything a stage plan reads: robot states, the shared statistics of all
/// past trajectories (grid and spectral), and the target.
struct StageContext {
  std::vector<RobotState> states;
  StatsAccumulator accumulator;
  SpectralAccumulator spectral;
  DensityGrid xi;
  CoeffSet xi_coeffs;
  std::vector<Obstacle> obstacles;
};

inline StageContext make_context(const MissionConfig& config, DensityGrid xi) {
  if (!(xi.domain() == config.domain)) throw InvalidInput("make_context: xi domain mismatch");
  std::vector<RobotState> states;
  for (const auto& r : config.robots) {
    states.push_back({r.initial_state.x, r.initial_state.y, wrap_angle(r.initial_state.theta)});
  }
  auto coeffs = density_coeffs(xi, config.k_max);
  return StageContext{std::move(states),        StatsAccumulator(config.domain),
                      SpectralAccumulator(config.domain, config.k_max),
                      std::move(xi),            std::move(coeffs),
                      config.obstacles};
}

inline StageContext make_context(const MissionConfig& config) {
  return make_context(config, build_target_density(config));
}

inline cem::Box param_box(const InputBounds& bounds, int primitives) {
  cem::Box box{cem::Vector(2 * primitives), cem::Vector(2 * primitives)};
  for (int p = 0; p < primitives; ++p) {
    box.lower(2 * p) = bounds.v_min;
    box.upper(2 * p) = bounds.v_max;
    box.lower(2 * p + 1) = bounds.w_min;
    box.upper(2 * p + 1) = bounds.w_max;
  }
  return box;
}

struct CostBreakdown {
  double objective = 0.0;
  double goal = 0.0;
  double penalty = 0.0;
  double constraint = 0.0;
  double terminal = std::numeric_limits<double>::infinity();
  double total = 0.0;
};

/// Stage cost for one robot against a frozen context. Holds scratch buffers,
/// so one instance must not be shared between threads.
class StageObjective {
 public:
  StageObjective(const StageContext& ctx, std::size_t robot, const MissionConfig& config)
      : ctx_(ctx), config_(config), robot_(robot) {
    if (robot >= config.robots.size() || robot >= ctx.states.size()) {
      throw InvalidInput("StageObjective: robot index out of range");
    }
    if (!(ctx.accumulator.domain() == ctx.xi.domain())) {
      throw InvalidInput("StageObjective: accumulator and xi domains differ");
    }
    if (config.objective == Objective::kKl) {
      const auto& mass = ctx.accumulator.mass();
      for (std::size_t i = 0; i < mass.size(); ++i) {
        base_mass_ += mass[i];
        if (mass[i] > 0.0) base_entropy_sum_ += mass[i] * std::log(mass[i] / ctx.xi[i]);
      }
      delta_.assign(mass.size(), 0.0);
    }
  }

  double operator()(const ParamVector& z) { return evaluate(z).total; }

  CostBreakdown evaluate(const ParamVector& z) {
    const auto traj = rollout(ctx_.states[robot_], z, config_.dt);
    return evaluate(traj);
  }

  CostBreakdown evaluate(const Trajectory& traj) {
    const RobotSpec& spec = config_.robots[robot_];
    CostBreakdown out;
    out.objective = config_.objective == Objective::kKl ? kl_cost(traj, spec.footprint)
                                                        : ergodic_cost(traj);
    if (config_.goal.enabled) {
      const auto& q = traj.final_state();
      const auto& qd = config_.goal.state;
      const double position_error = std::hypot(q.x - qd.x, q.y - qd.y);
      const double heading_error = std::abs(wrap_angle(q.theta - qd.theta));
      out.goal = config_.goal.alpha * (position_error + config_.goal.heading_weight * heading_error);
    }
    out.constraint = constraint_min(traj, spec.body_radius, ctx_.obstacles, ctx_.xi.domain());
    if (config_.terminal_loiter) {
      out.terminal = loiter_clearance(traj.final_state(), spec.bounds, spec.body_radius,
                                      ctx_.obstacles, ctx_.xi.domain());
    }
    const double violation = std::min(out.constraint, out.terminal);
    if (violation < 0.0) out.penalty = kPenaltyOffset + kPenaltyPerMeter * -violation;
    out.total = out.objective + out.goal + out.penalty;
    return out;
  }

 private:
  // KL of (past + candidate) against xi, updating only the cells the candidate
  // touches: KL = S / M - log(A M) with S = sum m log(m / xi), M = sum m.
  double kl_cost(const Trajectory& traj, const FootprintSpec& footprint) {
    const DomainSpec& domain = ctx_.xi.domain();
    const int nx = domain.nx();
    int i_lo = nx, i_hi = -1, j_lo = domain.ny(), j_hi = -1;
    const double dt = traj.dt();
    const auto& samples = traj.samples();
    for (std::size_t s = 0; s + 1 < samples.size(); ++s) {
      detail::visit_footprint(footprint, samples[s].state, domain, [&](int i, int j, double w) {
        delta_[static_cast<std::size_t>(j) * nx + i] += w * dt;
        i_lo = std::min(i_lo, i);
        i_hi = std::max(i_hi, i);
        j_lo = std::min(j_lo, j);
        j_hi = std::max(j_hi, j);
      });
    }
    double entropy_sum = base_entropy_sum_;
    double mass_sum = base_mass_;
    const auto& mass = ctx_.accumulator.mass();
    for (int j = j_lo; j <= j_hi; ++j) {
      for (int i = i_lo; i <= i_hi; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * nx + i;
        const double d = delta_[idx];
        if (d == 0.0) continue;
        delta_[idx] = 0.0;
        const double before = mass[idx];
        const double after = before + d;
        const double xi = ctx_.xi[idx];
        if (before > 0.0) entropy_sum -= before * std::log(before / xi);
        entropy_sum += after * std::log(after / xi);
        mass_sum += d;
      }
    }
    if (!(mass_sum > 0.0)) return 0.0;
    return entropy_sum / mass_sum - std::log(domain.cell_area() * mass_sum);
  }

  // Point-trajectory spectral metric over all past statistics plus the
  // candidate. Footprints do not enter this objective.
  double ergodic_cost(const Trajectory& traj) {
    SpectralAccumulator acc = ctx_.spectral;
    acc.add_trajectory(traj);
    return ergodicity_metric(acc.coefficients(), ctx_.xi_coeffs, config_.index_norm);
  }

  const StageContext& ctx_;
  const MissionConfig& config_;
  std::size_t robot_;
  double base_mass_ = 0.0;
  double base_entropy_sum_ = 0.0;
  std::vector<double> delta_;
};

/// Total cost of z for one robot (objective + goal term + constraint penalty).
inline double stage_cost(const ParamVector& z, const StageContext& ctx, std::size_t robot,
                         const MissionConfig& config) {
  StageObjective objective(ctx, robot, config);
  return objective(z);
}

// ---------------------------------------------------------------------------
// Stage and mission loops.

struct StageDiagnostics {
  double best_cost = 0.0;
  int iterations = 0;
  double constraint_min = 0.0;
  bool feasible = true;
  std::vector<cem::IterationRecord> history;
};

struct StageResult {
  Trajectory trajectory;
  std::vector<double> params;
  StageDiagnostics diagnostics;
};

/// Deterministic per-(stage, robot) seed derived from the base seed.
inline std::uint64_t stage_seed(std::uint64_t base, int stage, std::size_t robot) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(base);
  h = mix(h ^ static_cast<std::uint64_t>(stage));
  return mix(h ^ (static_cast<std::uint64_t>(robot) << 32));
}

/// Optimizes one robot's next horizon with the cross-entropy method. A winner
/// that still violates the constraints is returned with feasible == false.
inline StageResult plan_stage(const StageContext& ctx, std::size_t robot,
                              const MissionConfig& config, int stage = 0) {
  const RobotSpec& spec = config.robots.at(robot);
  const double tau = config.primitive_duration();
  const auto box = param_box(spec.bounds, config.primitives);
  cem::CemConfig cem_config = config.cem;
  cem_config.seed = stage_seed(config.cem.seed, stage, robot);

  StageObjective objective(ctx, robot, config);
  auto cost = [&](const cem::Vector& raw) {
    return objective(clamp_params({raw.data(), static_cast<std::size_t>(raw.size())},
                                  spec.bounds, tau));
  };
  auto result = cem::optimize(cost, cem::initial_gmm(box, cem_config.components), cem_config, box);
  // A winner still carrying the penalty usually means the covariance collapsed
  // early; start over from the broad initial distribution.
  for (int attempt = 1; attempt <= config.restarts && result.best_cost >= kPenaltyOffset; ++attempt) {
    cem_config.seed = stage_seed(config.cem.seed ^ (0xa5a5a5a5ULL * static_cast<std::uint64_t>(attempt)),
                                 stage, robot);
    auto retry = cem::optimize(cost, cem::initial_gmm(box, cem_config.components), cem_config, box);
    retry.history.insert(retry.history.begin(), result.history.begin(), result.history.end());
    retry.iterations += result.iterations;
    if (retry.best_cost < result.best_cost) {
      result = std::move(retry);
    } else {
      result.history = std::move(retry.history);
      result.iterations = retry.iterations;
    }
  }
  for (std::size_t k = 0; k < result.history.size(); ++k) result.history[k].iteration = static_cast<int>(k);

  const auto z = clamp_params({result.best.data(), static_cast<std::size_t>(result.best.size())},
                              spec.bounds, tau);
  StageResult out;
  out.trajectory = rollout(ctx.states[robot], z, config.dt);
  out.params.assign(z.values().begin(), z.values().end());
  out.diagnostics.best_cost = result.best_cost;
  out.diagnostics.iterations = result.iterations;
  out.diagnostics.constraint_min =
      constraint_min(out.trajectory, spec.body_radius, ctx.obstacles, ctx.xi.domain());
  out.diagnostics.feasible = out.diagnostics.constraint_min >= 0.0;
  out.diagnostics.history = result.history;
  return out;
}

/// Folds a robot's executed stage trajectory into the shared statistics and
/// advances its state.
inline void commit_stage(StageContext& ctx, std::size_t robot, const Trajectory& traj,
                         const MissionConfig& config) {
  ctx.accumulator.add(traj, config.robots.at(robot).footprint, static_cast<int>(robot),
                      OutsideSamples::kClip);
  ctx.spectral.add_trajectory(traj);
  ctx.states.at(robot) = traj.final_state();
}

struct MetricsRow {
  int stage = 0;
  int robot = 0;
  double phi = 0.0;
  double kl = 0.0;
  double bhattacharyya = 0.0;
  double best_cost = 0.0;
  double constraint_min = 0.0;
  double wall_ms = 0.0;
};

/// Coverage metrics of the current shared statistics against the target.
struct CoverageMetrics {
  double phi = 0.0;
  double kl = 0.0;
  double bhattacharyya = 0.0;
};

inline CoverageMetrics coverage_metrics(const StageContext& ctx, const MissionConfig& config) {
  const auto gamma = to_pdf(ctx.accumulator);
  return CoverageMetrics{
      ergodicity_metric(ctx.spectral.coefficients(), ctx.xi_coeffs, config.index_norm),
      kl_divergence(gamma, ctx.xi), bhattacharyya(gamma, ctx.xi)};
}

struct MissionResult {
  /// stage_trajectories[robot][stage]
  std::vector<std::vector<Trajectory>> stage_trajectories;
  std::vector<std::vector<StageDiagnostics>> diagnostics;
  std::vector<MetricsRow> metrics;
  StageContext context;
  std::optional<std::string> error;

  /// Metrics row of the last robot in each completed stage.
  std::vector<MetricsRow> stage_rows() const {
    std::vector<MetricsRow> out;
    for (const auto& row : metrics) {
      if (!out.empty() && out.back().stage == row.stage) out.back() = row;
      else out.push_back(row);
    }
    return out;
  }
};

/// Stages in order, robots in configuration order within each stage. Each
/// robot plans against the statistics of every trajectory committed so far.
/// A failing stage stops the mission; completed stages are kept.
inline MissionResult plan_mission(const MissionConfig& config, std::optional<DensityGrid> xi = {}) {
  config.validate();
  MissionResult result{{}, {}, {},
                       xi ? make_context(config, std::move(*xi)) : make_context(config),
                       std::nullopt};
  result.stage_trajectories.resize(config.robots.size());
  result.diagnostics.resize(config.robots.size());
  try {
    for (int stage = 0; stage < config.stages; ++stage) {
      for (std::size_t robot = 0; robot < config.robots.size(); ++robot) {
        const auto start = std::chrono::steady_clock::now();
        auto planned = plan_stage(result.context, robot, config, stage);
        const auto stop = std::chrono::steady_clock::now();
        commit_stage(result.context, robot, planned.trajectory, config);
        const auto cov = coverage_metrics(result.context, config);
        result.metrics.push_back(
            {stage + 1, static_cast<int>(robot), cov.phi, cov.kl, cov.bhattacharyya,
             planned.diagnostics.best_cost, planned.diagnostics.constraint_min,
             std::chrono::duration<double, std::milli>(stop - start).count()});
        result.stage_trajectories[robot].push_back(std::move(planned.trajectory));
        result.diagnostics[robot].push_back(std::move(planned.diagnostics));
      }
    }
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

/// Metrics CSV: "stage,robot,phi,kl,bhattacharyya,best_cost,constraint_min,wall_ms".
/// With record_timing == false the wall_ms column is written as 0 so that
/// reruns are byte-identical.
inline void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows,
                              bool record_timing = true) {
  out << "stage,robot,phi,kl,bhattacharyya,best_cost,constraint_min,wall_ms\n";
  for (const auto& r : rows) {
    out << r.stage << ',' << r.robot << ',' << format_double(r.phi, 17) << ','
        << format_double(r.kl, 17) << ',' << format_double(r.bhattacharyya, 17) << ','
        << format_double(r.best_cost, 17) << ',' << format_double(r.constraint_min, 17) << ','
        << format_double(record_timing ? r.wall_ms : 0.0, 17) << '\n';
  }
}

}  // namespace stoec
