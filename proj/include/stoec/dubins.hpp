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
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stoec/common.hpp"

namespace stoec {

/// Planar pose on SE(2); theta is kept wrapped to (-pi, pi].
struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  bool operator==(const RobotState&) const = default;
};

/// Box limits on forward speed v and turning rate w.
struct InputBounds {
  double v_min = 0.1;
  double v_max = 5.0;
  double w_min = -0.2;
  double w_max = 0.2;

  void validate() const {
    if (!(v_min <= v_max)) throw InvalidInput("InputBounds: v_min exceeds v_max");
    if (!(w_min <= w_max)) throw InvalidInput("InputBounds: w_min exceeds w_max");
  }
  bool operator==(const InputBounds&) const = default;
};

/// Below this turning rate a primitive is integrated as a straight segment.
inline constexpr double kStraightTurnRate = 1e-9;

/// Exact Dubins integration of a constant-control segment of length dt.
/// Uses the half-angle form of the arc solution, which is algebraically the
/// same as v/w (sin(theta + w dt) - sin(theta)) but does not cancel for small w.
/// Below the straight threshold the chord is taken along the mid-segment
/// heading, which reduces to v dt cos(theta) at w == 0.
inline RobotState primitive_step(const RobotState& q, double v, double w, double dt) {
  const double half = 0.5 * w * dt;
  const double chord =
      std::abs(w) < kStraightTurnRate ? v * dt : 2.0 * (v / w) * std::sin(half);
  const double mid = q.theta + half;
  return RobotState{q.x + chord * std::cos(mid), q.y + chord * std::sin(mid),
                    wrap_angle(q.theta + w * dt)};
}

/// CE decision vector z = (v1, w1, ..., vm, wm) with its bounds and the
/// common primitive duration tau.
class ParamVector {
 public:
  ParamVector(std::vector<double> values, InputBounds bounds, double tau)
      : values_(std::move(values)), bounds_(bounds), tau_(tau) {
    bounds_.validate();
    if (values_.empty() || values_.size() % 2 != 0) {
      throw InvalidInput("ParamVector: length must be 2m with m >= 1");
    }
    if (!(tau_ > 0.0)) throw InvalidInput("ParamVector: primitive duration must be positive");
    for (std::size_t i = 0; i < values_.size(); i += 2) {
      if (!(values_[i] >= bounds_.v_min && values_[i] <= bounds_.v_max)) {
        throw InvalidInput("ParamVector: v entry " + std::to_string(i / 2) + " out of bounds");
      }
      if (!(values_[i + 1] >= bounds_.w_min && values_[i + 1] <= bounds_.w_max)) {
        throw InvalidInput("ParamVector: w entry " + std::to_string(i / 2) + " out of bounds");
      }
    }
  }

  std::size_t primitive_count() const { return values_.size() / 2; }
  double v(std::size_t i) const { return values_[2 * i]; }
  double w(std::size_t i) const { return values_[2 * i + 1]; }
  double tau() const { return tau_; }
  const InputBounds& bounds() const { return bounds_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
  InputBounds bounds_;
  double tau_;
};

/// Clamps each entry of a raw (v, w, ...) vector into its interval.
inline ParamVector clamp_params(std::span<const double> raw, const InputBounds& bounds,
                                double tau) {
  if (raw.empty() || raw.size() % 2 != 0) {
    throw InvalidInput("clamp_params: raw vector length must be 2m with m >= 1");
  }
  std::vector<double> values(raw.begin(), raw.end());
  for (std::size_t i = 0; i < values.size(); i += 2) {
    values[i] = std::clamp(values[i], bounds.v_min, bounds.v_max);
    values[i + 1] = std::clamp(values[i + 1], bounds.w_min, bounds.w_max);
  }
  return ParamVector(std::move(values), bounds, tau);
}

struct TrajectorySample {
  double t = 0.0;
  RobotState state;
  double v = 0.0;
  double w = 0.0;

  bool operator==(const TrajectorySample&) const = default;
};

/// Uniformly sampled states with the controls active at each sample.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<TrajectorySample> samples, double dt,
             std::optional<double> duration = std::nullopt)
      : samples_(std::move(samples)), dt_(dt) {
    if (samples_.empty()) throw InvalidInput("Trajectory: no samples");
    if (!(dt_ > 0.0)) throw InvalidInput("Trajectory: dt must be positive");
    duration_ = duration.value_or(static_cast<double>(samples_.size() - 1) * dt_);
  }

  const std::vector<TrajectorySample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  double dt() const { return dt_; }
  double duration() const { return duration_; }
  const RobotState& initial_state() const { return samples_.front().state; }
  const RobotState& final_state() const { return samples_.back().state; }

  bool operator==(const Trajectory&) const = default;

 private:
  std::vector<TrajectorySample> samples_;
  double dt_ = 0.0;
  double duration_ = 0.0;
};

/// Number of dt steps per primitive; dt must divide tau.
inline std::size_t steps_per_primitive(double tau, double dt) {
  if (!(dt > 0.0) || !(tau > 0.0)) throw ConfigError("rollout: tau and dt must be positive");
  const double ratio = tau / dt;
  const double steps = std::round(ratio);
  if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("rollout: dt = " + format_double(dt, 9) +
                      " does not divide the primitive duration " + format_double(tau, 9));
  }
  return static_cast<std::size_t>(steps);
}

/// Chains the primitives of z from q0. Inside a primitive every sample is
/// taken from the primitive's start state, so no error accumulates.
inline Trajectory rollout(const RobotState& q0, const ParamVector& z, double dt) {
  const std::size_t steps = steps_per_primitive(z.tau(), dt);
  const std::size_t m = z.primitive_count();
  std::vector<TrajectorySample> samples;
  samples.reserve(m * steps + 1);
  RobotState start{q0.x, q0.y, wrap_angle(q0.theta)};
  for (std::size_t p = 0; p < m; ++p) {
    const double v = z.v(p);
    const double w = z.w(p);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t k = p * steps + s;
      samples.push_back({static_cast<double>(k) * dt,
                         primitive_step(start, v, w, static_cast<double>(s) * dt), v, w});
    }
    start = primitive_step(start, v, w, z.tau());
  }
  samples.push_back({static_cast<double>(m * steps) * dt, start, z.v(m - 1), z.w(m - 1)});
  return Trajectory(std::move(samples), dt, static_cast<double>(m) * z.tau());
}

// Trajectory CSV: "t,robot,x,y,theta,v,w", 9 significant digits.

inline void write_trajectory_csv_header(std::ostream& out) { out << "t,robot,x,y,theta,v,w\n"; }

inline void write_trajectory_csv_row(std::ostream& out, const TrajectorySample& s, int robot) {
  out << format_double(s.t, 9) << ',' << robot << ',' << format_double(s.state.x, 9) << ','
      << format_double(s.state.y, 9) << ',' << format_double(s.state.theta, 9) << ','
      << format_double(s.v, 9) << ',' << format_double(s.w, 9) << '\n';
}

struct TrajectoryCsvRow {
  TrajectorySample sample;
  int robot = 0;
};

inline std::vector<TrajectoryCsvRow> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("trajectory csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,robot,x,y,theta,v,w") throw InvalidInput("trajectory csv: unexpected header");
  std::vector<TrajectoryCsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw InvalidInput("trajectory csv: expected 7 columns");
    TrajectoryCsvRow row;
    row.sample.t = parse_double(cells[0]);
    row.robot = static_cast<int>(parse_double(cells[1]));
    row.sample.state = {parse_double(cells[2]), parse_double(cells[3]), parse_double(cells[4])};
    row.sample.v = parse_double(cells[5]);
    row.sample.w = parse_double(cells[6]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stoec
