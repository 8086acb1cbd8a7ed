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

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include "stoec/footprint.hpp"

namespace {

using stoec::BeamFootprint;
using stoec::DiracFootprint;
using stoec::DomainSpec;
using stoec::GaussianFootprint;
using stoec::StatsAccumulator;
using stoec::Trajectory;
using stoec::TrajectorySample;

double total_weight(const std::vector<stoec::CellWeight>& cells) {
  double s = 0.0;
  for (const auto& c : cells) s += c.weight;
  return s;
}

std::map<std::pair<int, int>, double> as_map(const std::vector<stoec::CellWeight>& cells) {
  std::map<std::pair<int, int>, double> m;
  for (const auto& c : cells) m[{c.i, c.j}] = c.weight;
  return m;
}

Trajectory parked(double x, double y, int samples, double dt) {
  std::vector<TrajectorySample> s;
  for (int k = 0; k < samples; ++k) s.push_back({k * dt, {x, y, 0.0}, 0.0, 0.0});
  return Trajectory(std::move(s), dt);
}

TEST(FootprintWeights, DiracIsInverseCellArea) {
  const DomainSpec d(10.0, 10.0, 100, 100);
  const auto cells = stoec::footprint_weights(DiracFootprint{}, {3.04, 7.96, 0.0}, d);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].i, 30);
  EXPECT_EQ(cells[0].j, 79);
  EXPECT_DOUBLE_EQ(cells[0].weight, 100.0);
  EXPECT_THROW(stoec::footprint_weights(DiracFootprint{}, {10.5, 1.0, 0.0}, d), stoec::InvalidInput);
}

TEST(FootprintWeights, GaussianIntegratesToOne) {
  const DomainSpec d(100.0, 100.0, 200, 200);
  Eigen::Matrix2d cov;
  cov << 25.0, 0.0, 0.0, 25.0;
  EXPECT_NEAR(total_weight(stoec::footprint_weights(GaussianFootprint{cov}, {50, 50, 0}, d)) * d.cell_area(),
              1.0, 1e-3);
  cov << 30.0, 12.0, 12.0, 20.0;
  EXPECT_NEAR(total_weight(stoec::footprint_weights(GaussianFootprint{cov}, {48, 52, 0}, d)) * d.cell_area(),
              1.0, 1e-3);
}

TEST(FootprintWeights, GaussianIsClippedAtTheBoundary) {
  const DomainSpec d(100.0, 100.0, 100, 100);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() * 25.0;
  const double mass = total_weight(stoec::footprint_weights(GaussianFootprint{cov}, {0.0, 50.0, 0}, d));
  EXPECT_NEAR(mass * d.cell_area(), 0.5, 0.02);
}

TEST(FootprintWeights, SeparableAndFullGaussianAgree) {
  const DomainSpec d(40.0, 40.0, 80, 80);
  Eigen::Matrix2d cov;
  cov << 9.0, 0.0, 0.0, 4.0;
  const auto a = as_map(stoec::footprint_weights(GaussianFootprint{cov}, {20.3, 19.1, 0}, d));
  cov(0, 1) = cov(1, 0) = 1e-300;
  const auto b = as_map(stoec::footprint_weights(GaussianFootprint{cov}, {20.3, 19.1, 0}, d));
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [k, w] : a) EXPECT_NEAR(w, b.at(k), 1e-15);
}

TEST(FootprintWeights, BeamSectorArea) {
  const DomainSpec d(100.0, 100.0, 400, 400);
  const BeamFootprint beam{10.0, M_PI / 3.0};
  const double area = static_cast<double>(stoec::footprint_weights(beam, {50.1, 49.9, 0.4}, d).size()) *
                      d.cell_area();
  EXPECT_NEAR(area, 52.36, 0.02 * 52.36);
}

TEST(FootprintWeights, BeamAlwaysSensesItsOwnCell) {
  const DomainSpec d(10.0, 10.0, 10, 10);
  const auto cells = stoec::footprint_weights(BeamFootprint{0.01, 0.1}, {4.5, 4.5, 1.0}, d);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].i, 4);
  EXPECT_EQ(cells[0].j, 4);
}

TEST(FootprintValidation, RejectsBadParameters) {
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(stoec::validate_footprint(GaussianFootprint{bad}), stoec::InvalidInput);
  EXPECT_THROW(stoec::validate_footprint(BeamFootprint{0.0, 1.0}), stoec::InvalidInput);
  EXPECT_THROW(stoec::validate_footprint(BeamFootprint{1.0, 7.0}), stoec::InvalidInput);
  EXPECT_NO_THROW(stoec::validate_footprint(BeamFootprint{1.0, 2.0 * M_PI}));
}

TEST(Accumulate, StationaryDiracConcentratesInOneCell) {
  const DomainSpec d(10.0, 10.0, 10, 10);
  const auto acc = stoec::accumulate(StatsAccumulator(d), parked(2.5, 7.5, 11, 0.1), DiracFootprint{});
  EXPECT_DOUBLE_EQ(acc.total_time(), 1.0);
  EXPECT_NEAR(acc.mass()[d.index(2, 7)], 1.0, 1e-12);
  const auto pdf = stoec::to_pdf(acc);
  EXPECT_NEAR(pdf.at(2, 7), 1.0, 1e-12);
  EXPECT_NEAR(pdf.integral(), 1.0, 1e-12);
  EXPECT_THROW(stoec::to_pdf(StatsAccumulator(d)), stoec::InvalidInput);
}

TEST(Accumulate, IsPureAndRejectsOutsideSamples) {
  const DomainSpec d(10.0, 10.0, 10, 10);
  const StatsAccumulator empty(d);
  const auto acc = stoec::accumulate(empty, parked(2.5, 7.5, 11, 0.1), DiracFootprint{});
  EXPECT_EQ(empty.total_time(), 0.0);
  EXPECT_EQ(acc.robot_count(), 1u);
  EXPECT_THROW(stoec::accumulate(empty, parked(12.5, 7.5, 3, 0.1), DiracFootprint{}), stoec::InvalidInput);
  const auto clipped = stoec::accumulate(empty, parked(12.5, 7.5, 3, 0.1), DiracFootprint{}, 0,
                                         stoec::OutsideSamples::kClip);
  EXPECT_DOUBLE_EQ(clipped.total_time(), 0.2);
  for (double m : clipped.mass()) EXPECT_EQ(m, 0.0);
}

TEST(Accumulate, OrderIndependentAndMergeable) {
  const DomainSpec d(20.0, 20.0, 40, 40);
  const auto a = parked(3.1, 4.2, 21, 0.1);
  const auto b = parked(15.2, 12.9, 31, 0.1);
  const GaussianFootprint g{Eigen::Matrix2d::Identity() * 2.0};
  const auto ab = stoec::accumulate(stoec::accumulate(StatsAccumulator(d), a, g, 0), b, g, 1);
  const auto ba = stoec::accumulate(stoec::accumulate(StatsAccumulator(d), b, g, 1), a, g, 0);
  const auto merged = stoec::accumulate(stoec::accumulate(StatsAccumulator(d), a, g, 0),
                                        stoec::accumulate(StatsAccumulator(d), b, g, 1));
  EXPECT_EQ(ab.robot_count(), 2u);
  EXPECT_EQ(merged.robot_count(), 2u);
  EXPECT_DOUBLE_EQ(ab.total_time(), 5.0);
  for (std::size_t c = 0; c < d.cell_count(); ++c) {
    EXPECT_NEAR(ab.mass()[c], ba.mass()[c], 1e-14);
    EXPECT_NEAR(ab.mass()[c], merged.mass()[c], 1e-14);
  }
}

// Total mass equals duration for a footprint entirely inside the domain.
TEST(Accumulate, ConservesSensingTime) {
  const DomainSpec d(100.0, 100.0, 100, 100);
  const auto t = parked(50.0, 50.0, 101, 0.1);
  const GaussianFootprint g{Eigen::Matrix2d::Identity() * 16.0};
  const auto acc = stoec::accumulate(StatsAccumulator(d), t, g);
  double mass = 0.0;
  for (double m : acc.mass()) mass += m;
  EXPECT_NEAR(mass * d.cell_area(), 10.0, 1e-2);
}

TEST(Accumulate, ScaleInvariantPdf) {
  const DomainSpec d(20.0, 20.0, 40, 40);
  const GaussianFootprint g{Eigen::Matrix2d::Identity() * 3.0};
  const auto acc = stoec::accumulate(StatsAccumulator(d), parked(7.0, 9.0, 11, 0.1), g);
  const auto p1 = stoec::to_pdf(acc);
  const auto p2 = stoec::to_pdf(acc.scaled(37.5));
  for (std::size_t c = 0; c < d.cell_count(); ++c) EXPECT_NEAR(p1[c], p2[c], 1e-12);
}

// A beam that turns on the spot through a full revolution covers a disc.
TEST(Accumulate, SpinningBeamCoversDisc) {
  const DomainSpec d(40.0, 40.0, 160, 160);
  const int n = 3600;
  const double dt = 0.01;
  std::vector<TrajectorySample> s;
  for (int k = 0; k <= n; ++k) {
    s.push_back({k * dt, {20.05, 19.95, stoec::wrap_angle(2.0 * M_PI * k / n)}, 0.0, 0.0});
  }
  const auto acc = stoec::accumulate(StatsAccumulator(d), Trajectory(s, dt), BeamFootprint{8.0, M_PI / 4.0});
  const auto pdf = stoec::to_pdf(acc);
  std::vector<double> disc(d.cell_count(), 0.0);
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      if (std::hypot(d.center_x(i) - 20.05, d.center_y(j) - 19.95) <= 8.0) disc[d.index(i, j)] = 1.0;
    }
  }
  const auto ref = stoec::normalize(disc, d);
  double l1 = 0.0;
  for (std::size_t c = 0; c < d.cell_count(); ++c) l1 += std::abs(pdf[c] - ref[c]) * d.cell_area();
  EXPECT_LT(l1, 0.05);
}

// Rotating the covariance by 90 degrees about a cell centre in a square grid
// rotates the weights.
TEST(FootprintWeights, GaussianRotationEquivariance) {
  const DomainSpec d(41.0, 41.0, 41, 41);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1.0, 9.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = u(rng);
    const double b = u(rng);
    const double c = 0.3 * std::sqrt(a * b);
    Eigen::Matrix2d cov;
    cov << a, c, c, b;
    Eigen::Matrix2d rot;
    rot << 0, -1, 1, 0;
    const Eigen::Matrix2d cov_r = rot * cov * rot.transpose();
    const auto w = as_map(stoec::footprint_weights(GaussianFootprint{cov}, {20.5, 20.5, 0}, d));
    const auto wr = as_map(stoec::footprint_weights(GaussianFootprint{cov_r}, {20.5, 20.5, 0}, d));
    for (const auto& [k, v] : w) {
      // (dx, dy) -> (-dy, dx)
      const int di = k.first - 20;
      const int dj = k.second - 20;
      const auto it = wr.find({20 - dj, 20 + di});
      const double other = it == wr.end() ? 0.0 : it->second;
      EXPECT_NEAR(v, other, 1e-12 * std::max(1.0, v));
    }
  }
}

TEST(FootprintWeights, BeamReflectionSymmetry) {
  const DomainSpec d(41.0, 41.0, 41, 41);
  for (double theta : {0.0, 0.3, 1.2, -2.5, 3.0}) {
    const BeamFootprint beam{9.0, 1.1};
    const auto w = as_map(stoec::footprint_weights(beam, {20.5, 20.5, theta}, d));
    const auto wr = as_map(stoec::footprint_weights(beam, {20.5, 20.5, -theta}, d));
    ASSERT_EQ(w.size(), wr.size()) << theta;
    for (const auto& [k, v] : w) EXPECT_EQ(wr.count({k.first, 40 - k.second}), 1u) << theta;
  }
}

TEST(AccumulatorDump, RoundTrip) {
  const DomainSpec d(20.0, 10.0, 40, 20);
  const GaussianFootprint g{Eigen::Matrix2d::Identity() * 3.0};
  const auto acc = stoec::accumulate(StatsAccumulator(d), parked(7.0, 3.0, 13, 0.1), g, 2);
  std::stringstream ss;
  stoec::write_accumulator(ss, acc);
  const auto back = stoec::read_accumulator(ss);
  EXPECT_EQ(back.domain(), d);
  EXPECT_EQ(back.total_time(), acc.total_time());
  EXPECT_EQ(back.mass(), acc.mass());
  std::stringstream missing("20 10 2 1\n0 0\n");
  EXPECT_THROW(stoec::read_accumulator(missing), stoec::InvalidInput);
}

}  // namespace
