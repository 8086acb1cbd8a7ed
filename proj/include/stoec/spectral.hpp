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

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stoec/common.hpp"
#include "stoec/domain_grid.hpp"
#include "stoec/dubins.hpp"

namespace stoec {

/// Default number of cosine modes per axis is k_max + 1.
inline constexpr int kDefaultKMax = 10;

struct BasisIndex {
  int k1 = 0;
  int k2 = 0;
};

/// Norm applied to the multi-index inside the spectral weights.
enum class IndexNorm { kEuclidean, kSum };

/// Coefficients c_k for every k in the (k_max + 1)^2 index box.
class CoeffSet {
 public:
  explicit CoeffSet(int k_max) : k_max_(k_max), values_(box_size(k_max), 0.0) {
    if (k_max < 0) throw InvalidInput("CoeffSet: k_max must be nonnegative");
  }

  int k_max() const { return k_max_; }
  std::size_t size() const { return values_.size(); }
  double& at(int k1, int k2) { return values_[offset(k1, k2)]; }
  double at(int k1, int k2) const { return values_[offset(k1, k2)]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool operator==(const CoeffSet&) const = default;

 private:
  static std::size_t box_size(int k_max) {
    return k_max < 0 ? 0 : static_cast<std::size_t>(k_max + 1) * (k_max + 1);
  }
  std::size_t offset(int k1, int k2) const {
    return static_cast<std::size_t>(k1) * (k_max_ + 1) + static_cast<std::size_t>(k2);
  }

  int k_max_;
  std::vector<double> values_;
};

namespace detail {

inline double axis_norm(int k) { return k == 0 ? 1.0 : 0.5; }

inline double basis_normalizer(int k1, int k2, const DomainSpec& domain) {
  return std::sqrt(domain.length_x() * domain.length_y() * axis_norm(k1) * axis_norm(k2));
}

}  // namespace detail

/// Neumann cosine basis with unit L2 norm on the domain:
/// f_k(x) = cos(k1 pi x / Lx) cos(k2 pi y / Ly) / h_k.
inline double basis_eval(BasisIndex k, double x, double y, const DomainSpec& domain) {
  if (!domain.contains(x, y)) throw InvalidInput("basis_eval: point outside the domain");
  if (k.k1 < 0 || k.k2 < 0) throw InvalidInput("basis_eval: negative index");
  return std::cos(k.k1 * kPi * x / domain.length_x()) *
         std::cos(k.k2 * kPi * y / domain.length_y()) /
         detail::basis_normalizer(k.k1, k.k2, domain);
}

/// Spectral weight (1 + |k|)^-s with s = 1.5 for planar domains.
inline double spectral_weight(int k1, int k2, IndexNorm norm = IndexNorm::kEuclidean) {
  const double magnitude = norm == IndexNorm::kEuclidean
                               ? std::sqrt(static_cast<double>(k1 * k1 + k2 * k2))
                               : static_cast<double>(k1 + k2);
  return std::pow(1.0 + magnitude, -1.5);
}

/// c_k = sum over cells of xi * f_k * cellArea.
inline CoeffSet density_coeffs(const DensityGrid& xi, int k_max) {
  const auto& domain = xi.domain();
  const int modes = k_max + 1;
  CoeffSet out(k_max);
  std::vector<double> cos_x(static_cast<std::size_t>(modes) * domain.nx());
  std::vector<double> cos_y(static_cast<std::size_t>(modes) * domain.ny());
  for (int k = 0; k < modes; ++k) {
    for (int i = 0; i < domain.nx(); ++i) {
      cos_x[k * domain.nx() + i] = std::cos(k * kPi * domain.center_x(i) / domain.length_x());
    }
    for (int j = 0; j < domain.ny(); ++j) {
      cos_y[k * domain.ny() + j] = std::cos(k * kPi * domain.center_y(j) / domain.length_y());
    }
  }
  std::vector<double> row_sums(domain.ny());
  for (int k1 = 0; k1 < modes; ++k1) {
    for (int j = 0; j < domain.ny(); ++j) {
      double s = 0.0;
      for (int i = 0; i < domain.nx(); ++i) s += xi.at(i, j) * cos_x[k1 * domain.nx() + i];
      row_sums[j] = s;
    }
    for (int k2 = 0; k2 < modes; ++k2) {
      double s = 0.0;
      for (int j = 0; j < domain.ny(); ++j) s += row_sums[j] * cos_y[k2 * domain.ny() + j];
      out.at(k1, k2) = s * domain.cell_area() / detail::basis_normalizer(k1, k2, domain);
    }
  }
  return out;
}

/// Running time integral of f_k along point trajectories. Keeps the
/// unnormalized sums so stages and robots can be added incrementally.
class SpectralAccumulator {
 public:
  SpectralAccumulator(const DomainSpec& domain, int k_max)
      : domain_(domain), sums_(k_max), cos_x_(k_max + 1), cos_y_(k_max + 1) {
    inv_h_.resize(sums_.size());
    for (int k1 = 0; k1 <= k_max; ++k1) {
      for (int k2 = 0; k2 <= k_max; ++k2) {
        inv_h_[k1 * (k_max + 1) + k2] = 1.0 / detail::basis_normalizer(k1, k2, domain);
      }
    }
  }

  const DomainSpec& domain() const { return domain_; }
  int k_max() const { return sums_.k_max(); }
  double total_time() const { return total_time_; }
  const CoeffSet& sums() const { return sums_; }

  /// Adds f_k(x, y) * weight for every k. Points are not range-checked.
  void add_point(double x, double y, double weight) {
    const int modes = k_max() + 1;
    const double ax = kPi * x / domain_.length_x();
    const double ay = kPi * y / domain_.length_y();
    for (int k = 0; k < modes; ++k) {
      cos_x_[k] = std::cos(k * ax);
      cos_y_[k] = std::cos(k * ay);
    }
    auto sums = sums_.values();
    for (int k1 = 0; k1 < modes; ++k1) {
      const double wx = weight * cos_x_[k1];
      const std::size_t row = static_cast<std::size_t>(k1) * modes;
      for (int k2 = 0; k2 < modes; ++k2) {
        sums[row + k2] += wx * cos_y_[k2] * inv_h_[row + k2];
      }
    }
  }

  /// Left-Riemann time quadrature over the samples of a trajectory.
  void add_trajectory(const Trajectory& traj) {
    const auto& samples = traj.samples();
    for (std::size_t s = 0; s + 1 < samples.size(); ++s) {
      add_point(samples[s].state.x, samples[s].state.y, traj.dt());
    }
    total_time_ += traj.duration();
  }

  void merge(const SpectralAccumulator& other) {
    if (other.k_max() != k_max() || !(other.domain() == domain_)) {
      throw InvalidInput("SpectralAccumulator::merge: incompatible accumulators");
    }
    auto dst = sums_.values();
    auto src = other.sums_.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    total_time_ += other.total_time_;
  }

  /// Time-averaged coefficients (sums divided by total time).
  CoeffSet coefficients() const {
    if (!(total_time_ > 0.0)) throw InvalidInput("SpectralAccumulator: no time accumulated");
    CoeffSet out(k_max());
    auto dst = out.values();
    auto src = sums_.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] / total_time_;
    return out;
  }

 private:
  DomainSpec domain_;
  CoeffSet sums_;
  double total_time_ = 0.0;
  std::vector<double> cos_x_;
  std::vector<double> cos_y_;
  std::vector<double> inv_h_;
};

/// c_k = (1 / sum of durations) * sum over robots and samples of f_k * dt.
inline CoeffSet trajectory_coeffs(std::span<const Trajectory> trajectories, int k_max,
                                  const DomainSpec& domain) {
  if (trajectories.empty()) throw InvalidInput("trajectory_coeffs: no trajectories");
  SpectralAccumulator acc(domain, k_max);
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.samples()) {
      if (!domain.contains(s.state.x, s.state.y)) {
        throw InvalidInput("trajectory_coeffs: sample outside the domain");
      }
    }
    acc.add_trajectory(traj);
  }
  return acc.coefficients();
}

/// Phi = sum_k lambda_k |a_k - b_k|^2.
inline double ergodicity_metric(const CoeffSet& traj_coeffs, const CoeffSet& density_coeffs,
                                IndexNorm norm = IndexNorm::kEuclidean) {
  if (traj_coeffs.k_max() != density_coeffs.k_max()) {
    throw InvalidInput("ergodicity_metric: coefficient sets differ in k_max");
  }
  double phi = 0.0;
  for (int k1 = 0; k1 <= traj_coeffs.k_max(); ++k1) {
    for (int k2 = 0; k2 <= traj_coeffs.k_max(); ++k2) {
      const double d = traj_coeffs.at(k1, k2) - density_coeffs.at(k1, k2);
      phi += spectral_weight(k1, k2, norm) * d * d;
    }
  }
  return phi;
}

/// Debug dump as "k1,k2,value" rows.
inline void write_coeffs_csv(std::ostream& out, const CoeffSet& coeffs) {
  out << "k1,k2,value\n";
  for (int k1 = 0; k1 <= coeffs.k_max(); ++k1) {
    for (int k2 = 0; k2 <= coeffs.k_max(); ++k2) {
      out << k1 << ',' << k2 << ',' << format_double(coeffs.at(k1, k2), 17) << '\n';
    }
  }
}

}  // namespace stoec
