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
#include <fstream>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "stoec/common.hpp"
#include "stoec/domain_grid.hpp"
#include "stoec/dubins.hpp"

namespace stoec {

/// Point sensor: all mass in the cell containing the robot.
struct DiracFootprint {
  bool operator==(const DiracFootprint&) const = default;
};

/// Gaussian blob centred on the robot, truncated at four standard deviations.
struct GaussianFootprint {
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();

  bool operator==(const GaussianFootprint& o) const { return covariance == o.covariance; }
};

/// Forward-looking sector of the given radius and full view angle, centred on
/// the heading.
struct BeamFootprint {
  double radius = 1.0;
  double view_angle = kPi / 2.0;

  bool operator==(const BeamFootprint&) const = default;
};

using FootprintSpec = std::variant<DiracFootprint, GaussianFootprint, BeamFootprint>;

inline void validate_footprint(const FootprintSpec& spec) {
  if (const auto* g = std::get_if<GaussianFootprint>(&spec)) {
    if (!detail::is_spd(g->covariance)) {
      throw InvalidInput("GaussianFootprint: covariance is not symmetric positive-definite");
    }
  } else if (const auto* b = std::get_if<BeamFootprint>(&spec)) {
    if (!(b->radius > 0.0)) throw InvalidInput("BeamFootprint: radius must be positive");
    if (!(b->view_angle > 0.0 && b->view_angle <= kTwoPi)) {
      throw InvalidInput("BeamFootprint: view angle must lie in (0, 2 pi]");
    }
  }
}

inline constexpr double kGaussianTruncationSigmas = 4.0;

namespace detail {

// Slack on the beam's radius and bearing tests so that cells lying exactly on
// the sector edge are classified the same way after rotations.
inline constexpr double kBeamSlack = 1e-12;

/// Calls fn(i, j, weight) for every cell the footprint touches. Cells outside
/// the grid are skipped; nothing is renormalized.
template <typename Fn>
void visit_footprint(const FootprintSpec& spec, const RobotState& state,
                     const DomainSpec& domain, Fn&& fn) {
  const double cw = domain.cell_width();
  const double ch = domain.cell_height();
  std::visit(
      [&](const auto& fp) {
        using T = std::decay_t<decltype(fp)>;
        if constexpr (std::is_same_v<T, DiracFootprint>) {
          if (!domain.contains(state.x, state.y)) return;
          fn(domain.column_of(state.x), domain.row_of(state.y), 1.0 / domain.cell_area());
        } else if constexpr (std::is_same_v<T, GaussianFootprint>) {
          const Eigen::Matrix2d& cov = fp.covariance;
          const double sx = std::sqrt(cov(0, 0));
          const double sy = std::sqrt(cov(1, 1));
          const int i0 = std::max(0, static_cast<int>(std::ceil((state.x - kGaussianTruncationSigmas * sx) / cw - 0.5)));
          const int i1 = std::min(domain.nx() - 1, static_cast<int>(std::floor((state.x + kGaussianTruncationSigmas * sx) / cw - 0.5)));
          const int j0 = std::max(0, static_cast<int>(std::ceil((state.y - kGaussianTruncationSigmas * sy) / ch - 0.5)));
          const int j1 = std::min(domain.ny() - 1, static_cast<int>(std::floor((state.y + kGaussianTruncationSigmas * sy) / ch - 0.5)));
          if (i0 > i1 || j0 > j1) return;
          const double norm = 1.0 / (kTwoPi * std::sqrt(cov.determinant()));
          if (cov(0, 1) == 0.0) {
            // Axis-aligned covariance factorizes into per-axis terms.
            thread_local std::vector<double> gx;
            gx.resize(static_cast<std::size_t>(i1 - i0 + 1));
            for (int i = i0; i <= i1; ++i) {
              const double dx = domain.center_x(i) - state.x;
              gx[i - i0] = std::exp(-0.5 * dx * dx / cov(0, 0));
            }
            for (int j = j0; j <= j1; ++j) {
              const double dy = domain.center_y(j) - state.y;
              const double gy = norm * std::exp(-0.5 * dy * dy / cov(1, 1));
              for (int i = i0; i <= i1; ++i) fn(i, j, gy * gx[i - i0]);
            }
          } else {
            const Eigen::Matrix2d info = cov.inverse();
            for (int j = j0; j <= j1; ++j) {
              const double dy = domain.center_y(j) - state.y;
              for (int i = i0; i <= i1; ++i) {
                const double dx = domain.center_x(i) - state.x;
                const double q = info(0, 0) * dx * dx + 2.0 * info(0, 1) * dx * dy +
                                 info(1, 1) * dy * dy;
                fn(i, j, norm * std::exp(-0.5 * q));
              }
            }
          }
        } else {
          const double r = fp.radius;
          const double r2 = r * r * (1.0 + kBeamSlack);
          const double half_angle = 0.5 * fp.view_angle + kBeamSlack;
          const int i0 = std::max(0, static_cast<int>(std::floor((state.x - r) / cw - 0.5)));
          const int i1 = std::min(domain.nx() - 1, static_cast<int>(std::ceil((state.x + r) / cw - 0.5)));
          const int j0 = std::max(0, static_cast<int>(std::floor((state.y - r) / ch - 0.5)));
          const int j1 = std::min(domain.ny() - 1, static_cast<int>(std::ceil((state.y + r) / ch - 0.5)));
          for (int j = j0; j <= j1; ++j) {
            const double dy = domain.center_y(j) - state.y;
            for (int i = i0; i <= i1; ++i) {
              const double dx = domain.center_x(i) - state.x;
              const double d2 = dx * dx + dy * dy;
              if (d2 > r2) continue;
              // The robot's own location is always sensed.
              if (d2 > 0.0 &&
                  std::abs(wrap_angle(std::atan2(dy, dx) - state.theta)) > half_angle) {
                continue;
              }
              fn(i, j, 1.0);
            }
          }
        }
      },
      spec);
}

}  // namespace detail

struct CellWeight {
  int i = 0;
  int j = 0;
  double weight = 0.0;

  bool operator==(const CellWeight&) const = default;
};

/// Sparse footprint weights at the cell centres for one robot state.
inline std::vector<CellWeight> footprint_weights(const FootprintSpec& spec,
                                                 const RobotState& state,
                                                 const DomainSpec& domain) {
  if (!domain.contains(state.x, state.y)) {
    throw InvalidInput("footprint_weights: position outside the domain");
  }
  std::vector<CellWeight> out;
  detail::visit_footprint(spec, state, domain,
                          [&](int i, int j, double w) { out.push_back({i, j, w}); });
  return out;
}

/// How accumulation treats samples whose position lies outside the domain.
enum class OutsideSamples { kReject, kClip };

/// Unnormalized time-integrated sensing mass per cell plus the total time that
/// produced it. Values are immutable snapshots; accumulate returns a new one.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(DomainSpec domain)
      : domain_(std::move(domain)), mass_(domain_.cell_count(), 0.0) {}

  StatsAccumulator(DomainSpec domain, std::vector<double> mass, double total_time,
                   std::vector<int> robots = {})
      : domain_(std::move(domain)),
        mass_(std::move(mass)),
        total_time_(total_time),
        robots_(std::move(robots)) {
    if (mass_.size() != domain_.cell_count()) {
      throw InvalidInput("StatsAccumulator: mass size does not match the domain");
    }
    for (double m : mass_) {
      if (!(m >= 0.0)) throw InvalidInput("StatsAccumulator: negative mass");
    }
    if (!(total_time_ >= 0.0)) throw InvalidInput("StatsAccumulator: negative total time");
    std::sort(robots_.begin(), robots_.end());
    robots_.erase(std::unique(robots_.begin(), robots_.end()), robots_.end());
  }

  const DomainSpec& domain() const { return domain_; }
  const std::vector<double>& mass() const { return mass_; }
  double total_time() const { return total_time_; }
  std::size_t robot_count() const { return robots_.size(); }
  const std::vector<int>& robots() const { return robots_; }

  /// In-place variant of accumulate, for owners of a private copy.
  void add(const Trajectory& traj, const FootprintSpec& spec, int robot = 0,
           OutsideSamples outside = OutsideSamples::kReject) {
    const auto& samples = traj.samples();
    if (outside == OutsideSamples::kReject) {
      for (const auto& s : samples) {
        if (!domain_.contains(s.state.x, s.state.y)) {
          throw InvalidInput("accumulate: trajectory sample outside the domain");
        }
      }
    }
    const double dt = traj.dt();
    const int nx = domain_.nx();
    for (std::size_t s = 0; s + 1 < samples.size(); ++s) {
      detail::visit_footprint(spec, samples[s].state, domain_, [&](int i, int j, double w) {
        mass_[static_cast<std::size_t>(j) * nx + i] += w * dt;
      });
    }
    total_time_ += traj.duration();
    auto it = std::lower_bound(robots_.begin(), robots_.end(), robot);
    if (it == robots_.end() || *it != robot) robots_.insert(it, robot);
  }

  /// Multiplies all mass by c > 0, leaving the time bookkeeping unchanged.
  StatsAccumulator scaled(double c) const {
    if (!(c > 0.0)) throw InvalidInput("StatsAccumulator::scaled: factor must be positive");
    auto mass = mass_;
    for (double& m : mass) m *= c;
    return StatsAccumulator(domain_, std::move(mass), total_time_, robots_);
  }

 private:
  DomainSpec domain_;
  std::vector<double> mass_;
  double total_time_ = 0.0;
  std::vector<int> robots_;
};

/// Adds footprint mass * dt for every sample (left-Riemann in time) and the
/// trajectory duration to the total time.
inline StatsAccumulator accumulate(const StatsAccumulator& acc, const Trajectory& traj,
                                   const FootprintSpec& spec, int robot = 0,
                                   OutsideSamples outside = OutsideSamples::kReject) {
  StatsAccumulator out = acc;
  out.add(traj, spec, robot, outside);
  return out;
}

inline StatsAccumulator accumulate(const StatsAccumulator& acc, const StatsAccumulator& other) {
  if (!(acc.domain() == other.domain())) throw InvalidInput("accumulate: domain mismatch");
  auto mass = acc.mass();
  for (std::size_t i = 0; i < mass.size(); ++i) mass[i] += other.mass()[i];
  auto robots = acc.robots();
  robots.insert(robots.end(), other.robots().begin(), other.robots().end());
  return StatsAccumulator(acc.domain(), std::move(mass), acc.total_time() + other.total_time(),
                          std::move(robots));
}

/// Normalizes accumulated mass into the time-average statistics pdf.
inline DensityGrid to_pdf(const StatsAccumulator& acc) {
  if (!(acc.total_time() > 0.0)) throw InvalidInput("to_pdf: accumulator is empty");
  return normalize(acc.mass(), acc.domain());
}

/// Grid dump of the mass with a leading "# total_time <t> robots <n>" line.
inline void write_accumulator(std::ostream& out, const StatsAccumulator& acc) {
  out << "# total_time " << format_double(acc.total_time(), 17) << " robots "
      << acc.robot_count() << '\n';
  write_grid(out, acc.domain(), acc.mass());
}

inline StatsAccumulator read_accumulator(std::istream& in) {
  auto raw = read_raw_grid(in);
  double total_time = 0.0;
  bool found = false;
  for (const auto& c : raw.comments) {
    std::istringstream ss(c.substr(1));
    std::string key;
    std::string value;
    if (ss >> key >> value && key == "total_time") {
      total_time = parse_double(value);
      found = true;
    }
  }
  if (!found) throw InvalidInput("accumulator dump: missing total_time comment");
  return StatsAccumulator(raw.domain, std::move(raw.values), total_time);
}

}  // namespace stoec
