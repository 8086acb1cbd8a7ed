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
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "stoec/common.hpp"

namespace stoec {

/// Axis-aligned rectangle [0, Lx] x [0, Ly] split into nx by ny cells.
/// Cells are indexed row-major with y ascending: index = j * nx + i.
class DomainSpec {
 public:
  DomainSpec(double length_x, double length_y, int nx, int ny)
      : length_x_(length_x), length_y_(length_y), nx_(nx), ny_(ny) {
    if (!(length_x > 0.0) || !(length_y > 0.0) || !std::isfinite(length_x) ||
        !std::isfinite(length_y)) {
      throw InvalidInput("DomainSpec: lengths must be positive and finite");
    }
    if (nx < 2 || ny < 2) {
      throw InvalidInput("DomainSpec: at least 2 cells per axis required");
    }
  }

  double length_x() const { return length_x_; }
  double length_y() const { return length_y_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
  }
  double cell_width() const { return length_x_ / nx_; }
  double cell_height() const { return length_y_ / ny_; }
  double cell_area() const { return cell_width() * cell_height(); }

  double center_x(int i) const { return (i + 0.5) * cell_width(); }
  double center_y(int j) const { return (j + 0.5) * cell_height(); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * nx_ + static_cast<std::size_t>(i);
  }

  bool contains(double x, double y) const {
    return x >= 0.0 && x <= length_x_ && y >= 0.0 && y <= length_y_;
  }

  /// Column of the cell containing x; the closed upper edge maps to the last
  /// column.
  int column_of(double x) const {
    return std::clamp(static_cast<int>(std::floor(x / cell_width())), 0, nx_ - 1);
  }
  int row_of(double y) const {
    return std::clamp(static_cast<int>(std::floor(y / cell_height())), 0, ny_ - 1);
  }

  bool operator==(const DomainSpec&) const = default;

 private:
  double length_x_;
  double length_y_;
  int nx_;
  int ny_;
};

/// Nonnegative per-cell values over a domain. Produced normalized (a pdf) by
/// every factory in this module; the raw constructor is for readers and tests.
class DensityGrid {
 public:
  DensityGrid(DomainSpec domain, std::vector<double> values)
      : domain_(std::move(domain)), values_(std::move(values)) {
    if (values_.size() != domain_.cell_count()) {
      throw InvalidInput("DensityGrid: value count does not match the domain");
    }
  }

  const DomainSpec& domain() const { return domain_; }
  std::span<const double> values() const { return values_; }
  double at(int i, int j) const { return values_[domain_.index(i, j)]; }
  double operator[](std::size_t idx) const { return values_[idx]; }

  /// Sum of value * cellArea (midpoint quadrature of the integral).
  double integral() const {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum * domain_.cell_area();
  }

  double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

 private:
  DomainSpec domain_;
  std::vector<double> values_;
};

struct GmmComponent {
  Eigen::Vector2d mean;
  Eigen::Matrix2d covariance;
  double weight = 1.0;
};

namespace detail {

inline bool is_spd(const Eigen::Matrix2d& m) {
  if (!m.allFinite()) return false;
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    return false;
  }
  return m(0, 0) > 0.0 && m.determinant() > 0.0;
}

inline void require_same_domain(const DensityGrid& a, const DensityGrid& b,
                                const char* what) {
  if (!(a.domain() == b.domain())) {
    throw InvalidInput(std::string(what) + ": densities are defined on different domains");
  }
}

}  // namespace detail

/// Scales nonnegative cell values so that sum(value) * cellArea == 1.
inline DensityGrid normalize(std::vector<double> values, const DomainSpec& domain) {
  if (values.size() != domain.cell_count()) {
    throw InvalidInput("normalize: value count does not match the domain");
  }
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidInput("normalize: values must be finite and nonnegative");
    }
    sum += v;
  }
  if (!(sum > 0.0)) throw InvalidInput("normalize: total mass is zero, no valid pdf");
  const double scale = 1.0 / (sum * domain.cell_area());
  for (double& v : values) v *= scale;
  return DensityGrid(domain, std::move(values));
}

/// Truncates a Gaussian mixture to the domain and normalizes it.
inline DensityGrid build_gmm_density(const DomainSpec& domain,
                                     std::span<const GmmComponent> components) {
  if (components.empty()) throw InvalidInput("build_gmm_density: no components");
  double weight_sum = 0.0;
  for (const auto& c : components) {
    if (!detail::is_spd(c.covariance)) {
      throw InvalidInput("build_gmm_density: covariance is not symmetric positive-definite");
    }
    if (!(c.weight >= 0.0)) throw InvalidInput("build_gmm_density: negative weight");
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-6) {
    throw InvalidInput("build_gmm_density: component weights must sum to 1");
  }

  std::vector<double> values(domain.cell_count(), 0.0);
  for (const auto& c : components) {
    const Eigen::Matrix2d info = c.covariance.inverse();
    const double norm = c.weight / (kTwoPi * std::sqrt(c.covariance.determinant()));
    for (int j = 0; j < domain.ny(); ++j) {
      const double dy = domain.center_y(j) - c.mean.y();
      for (int i = 0; i < domain.nx(); ++i) {
        const double dx = domain.center_x(i) - c.mean.x();
        const double q = info(0, 0) * dx * dx + 2.0 * info(0, 1) * dx * dy +
                         info(1, 1) * dy * dy;
        values[domain.index(i, j)] += norm * std::exp(-0.5 * q);
      }
    }
  }
  return normalize(std::move(values), domain);
}

/// Raises every cell to at least relative_floor * max and renormalizes, so a
/// KL divergence against the result is finite.
inline DensityGrid floor_density(const DensityGrid& density, double relative_floor = 1e-10) {
  const double floor = relative_floor * density.max_value();
  std::vector<double> values(density.values().begin(), density.values().end());
  for (double& v : values) v = std::max(v, floor);
  return normalize(std::move(values), density.domain());
}

/// Relative entropy sum(gamma * log(gamma / xi)) * cellArea. Cells with
/// gamma == 0 contribute 0. xi must be strictly positive wherever gamma is.
inline double kl_divergence(const DensityGrid& gamma, const DensityGrid& xi) {
  detail::require_same_domain(gamma, xi, "kl_divergence");
  double sum = 0.0;
  for (std::size_t idx = 0; idx < gamma.values().size(); ++idx) {
    const double g = gamma[idx];
    if (g <= 0.0) continue;
    const double q = xi[idx];
    if (!(q > 0.0)) {
      throw InvalidInput("kl_divergence: xi vanishes where gamma has mass (floor xi first)");
    }
    sum += g * std::log(g / q);
  }
  // Gibbs' inequality holds exactly; clip rounding noise at zero.
  return std::max(0.0, sum * gamma.domain().cell_area());
}

/// -ln(sum(sqrt(gamma * xi)) * cellArea), with the coefficient clamped at
/// 1e-300 before the log.
inline double bhattacharyya(const DensityGrid& gamma, const DensityGrid& xi) {
  detail::require_same_domain(gamma, xi, "bhattacharyya");
  double sum = 0.0;
  for (std::size_t idx = 0; idx < gamma.values().size(); ++idx) {
    sum += std::sqrt(gamma[idx] * xi[idx]);
  }
  const double coefficient = std::max(sum * gamma.domain().cell_area(), 1e-300);
  return std::max(0.0, -std::log(coefficient));
}

// Grid dump: "Lx Ly nx ny" then ny rows of nx values, y ascending. Lines
// starting with '#' are comments.

inline void write_grid(std::ostream& out, const DomainSpec& domain,
                       std::span<const double> values) {
  out << format_double(domain.length_x(), 17) << ' '
      << format_double(domain.length_y(), 17) << ' ' << domain.nx() << ' '
      << domain.ny() << '\n';
  for (int j = 0; j < domain.ny(); ++j) {
    for (int i = 0; i < domain.nx(); ++i) {
      if (i > 0) out << ' ';
      out << format_double(values[domain.index(i, j)], 17);
    }
    out << '\n';
  }
}

inline void write_grid(std::ostream& out, const DensityGrid& grid) {
  write_grid(out, grid.domain(), grid.values());
}

struct RawGrid {
  DomainSpec domain;
  std::vector<double> values;
  std::vector<std::string> comments;
};

inline RawGrid read_raw_grid(std::istream& in) {
  std::vector<std::string> comments;
  std::string line;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '#') {
        comments.push_back(line);
        continue;
      }
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      return true;
    }
    return false;
  };
  auto tokens = [](const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  };

  if (!next_line()) throw InvalidInput("grid dump: missing header line");
  const auto header = tokens(line);
  if (header.size() != 4) throw InvalidInput("grid dump: header must be 'L1 L2 n1 n2'");
  const double lx = parse_double(header[0]);
  const double ly = parse_double(header[1]);
  const double nx_d = parse_double(header[2]);
  const double ny_d = parse_double(header[3]);
  if (nx_d != std::floor(nx_d) || ny_d != std::floor(ny_d) || nx_d > 1e7 || ny_d > 1e7) {
    throw InvalidInput("grid dump: cell counts must be integers");
  }
  DomainSpec domain(lx, ly, static_cast<int>(nx_d), static_cast<int>(ny_d));
  std::vector<double> values;
  values.reserve(domain.cell_count());
  for (int j = 0; j < domain.ny(); ++j) {
    if (!next_line()) throw InvalidInput("grid dump: truncated, expected " +
                                         std::to_string(domain.ny()) + " rows");
    const auto row = tokens(line);
    if (row.size() != static_cast<std::size_t>(domain.nx())) {
      throw InvalidInput("grid dump: row " + std::to_string(j) + " has " +
                         std::to_string(row.size()) + " values, expected " +
                         std::to_string(domain.nx()));
    }
    for (const auto& tok : row) values.push_back(parse_double(tok));
  }
  return RawGrid{domain, std::move(values), std::move(comments)};
}

/// Reads a grid dump as-is (no renormalization).
inline DensityGrid read_grid(std::istream& in) {
  auto raw = read_raw_grid(in);
  return DensityGrid(raw.domain, std::move(raw.values));
}

inline DensityGrid read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file: " + path);
  return read_grid(in);
}

inline void write_grid_file(const std::string& path, const DensityGrid& grid) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid file: " + path);
  write_grid(out, grid);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace stoec
