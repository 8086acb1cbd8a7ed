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
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "stoec/common.hpp"

namespace stoec::cem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Per-coordinate box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  Vector clamp(const Vector& z) const { return z.cwiseMax(lower).cwiseMin(upper); }
};

struct GmmComponent {
  Vector mean;
  Matrix covariance;
  double weight = 1.0;
};

/// Sampling density over the decision vector.
struct GmmParams {
  std::vector<GmmComponent> components;

  Eigen::Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }

  void validate() const {
    if (components.empty()) throw InvalidInput("GmmParams: no components");
    double sum = 0.0;
    for (const auto& c : components) {
      if (c.mean.size() != dim() || c.covariance.rows() != dim() ||
          c.covariance.cols() != dim()) {
        throw InvalidInput("GmmParams: inconsistent component dimensions");
      }
      if (!(c.weight >= 0.0)) throw InvalidInput("GmmParams: negative weight");
      sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("GmmParams: weights must sum to 1");
  }

  /// Largest covariance eigenvalue over all components.
  double max_covariance_eigenvalue() const {
    double out = 0.0;
    for (const auto& c : components) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(c.covariance, Eigen::EigenvaluesOnly);
      out = std::max(out, es.eigenvalues().maxCoeff());
    }
    return out;
  }
};

struct CemConfig {
  int samples = 40;
  double elite_fraction = 0.1;
  int max_iterations = 30;
  double variance_floor = 1e-6;
  double convergence_threshold = 1e-4;
  std::uint64_t seed = 1;
  int components = 1;
  int em_iterations = 50;

  int elite_count() const {
    return static_cast<int>(std::ceil(elite_fraction * samples - 1e-12));
  }

  void validate() const {
    if (samples < 2) throw ConfigError("cem: samples must be at least 2");
    if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) {
      throw ConfigError("cem: elite_fraction must lie in (0, 1)");
    }
    if (elite_count() < 1 || elite_count() >= samples) {
      throw ConfigError("cem: elite count must satisfy 1 <= ceil(rho N) < N");
    }
    if (max_iterations < 1) throw ConfigError("cem: max_iterations must be at least 1");
    if (!(variance_floor > 0.0)) throw ConfigError("cem: variance_floor must be positive");
    if (!(convergence_threshold > 0.0)) {
      throw ConfigError("cem: convergence_threshold must be positive");
    }
    if (components < 1) throw ConfigError("cem: components must be at least 1");
  }

  bool operator==(const CemConfig&) const = default;
};

/// Mean at the box midpoint, covariance diag(((hi - lo) / 2)^2). With K > 1
/// the means are spread along the box diagonal.
inline GmmParams initial_gmm(const Box& box, int components = 1) {
  if (components < 1) throw InvalidInput("initial_gmm: need at least one component");
  const Vector mid = 0.5 * (box.lower + box.upper);
  const Vector half = 0.5 * (box.upper - box.lower);
  Matrix cov = half.cwiseAbs2().asDiagonal();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) cov(i, i) = std::max(cov(i, i), 1e-12);
  GmmParams out;
  for (int k = 0; k < components; ++k) {
    const double offset = components == 1 ? 0.0 : -0.5 + static_cast<double>(k) / (components - 1);
    out.components.push_back({mid + offset * half, cov, 1.0 / components});
  }
  return out;
}

/// Draws n vectors: component chosen in proportion to weight, then a
/// multivariate normal draw, then clamped into the box.
template <typename Rng>
std::vector<Vector> sample(const GmmParams& gmm, int n, const Box& box, Rng& rng) {
  gmm.validate();
  const Eigen::Index d = gmm.dim();
  if (box.dim() != d) throw InvalidInput("cem::sample: box dimension mismatch");
  std::vector<Matrix> factors;
  factors.reserve(gmm.components.size());
  for (const auto& c : gmm.components) {
    Eigen::LLT<Matrix> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw InvalidInput("cem::sample: covariance not SPD");
    factors.push_back(llt.matrixL());
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  Vector noise(d);
  for (int s = 0; s < n; ++s) {
    std::size_t k = 0;
    if (gmm.components.size() > 1) {
      double u = uniform(rng);
      for (k = 0; k + 1 < gmm.components.size(); ++k) {
        u -= gmm.components[k].weight;
        if (u < 0.0) break;
      }
    }
    for (Eigen::Index i = 0; i < d; ++i) noise(i) = normal(rng);
    out.push_back(box.clamp(gmm.components[k].mean + factors[k] * noise));
  }
  return out;
}

namespace detail {

/// Lexicographic comparison used to make elite ordering independent of the
/// order samples were presented in.
inline bool lex_less(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a(i) < b(i)) return true;
    if (b(i) < a(i)) return false;
  }
  return a.size() < b.size();
}

inline double log_normal_density(const Vector& x, const Vector& mean,
                                 const Eigen::LLT<Matrix>& llt) {
  const Vector r = llt.matrixL().solve(x - mean);
  const Matrix& l = llt.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
  return -0.5 * (r.squaredNorm() + log_det + static_cast<double>(x.size()) * std::log(kTwoPi));
}

inline Matrix floored(Matrix cov, double floor) {
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += floor;
  return cov;
}

}  // namespace detail

/// Indices of the ceil(rho N) lowest-cost samples, ordered by cost, then by
/// sample value, then by index.
inline std::vector<std::size_t> select_elites(const std::vector<Vector>& samples,
                                              const std::vector<double>& costs,
                                              int elite_count) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (costs[a] != costs[b]) return costs[a] < costs[b];
    if (detail::lex_less(samples[a], samples[b])) return true;
    if (detail::lex_less(samples[b], samples[a])) return false;
    return a < b;
  });
  order.resize(static_cast<std::size_t>(elite_count));
  return order;
}

/// Refits the sampling density to the elite set. K = 1 uses the sample mean
/// and (maximum-likelihood) covariance; K > 1 runs EM from `previous`.
/// Every covariance gets variance_floor added to its diagonal.
inline GmmParams update(const std::vector<Vector>& samples, const std::vector<double>& costs,
                        const CemConfig& config, const GmmParams& previous) {
  if (samples.size() != costs.size()) throw InvalidInput("cem::update: sample/cost count mismatch");
  for (double c : costs) {
    if (!std::isfinite(c)) throw InvalidInput("cem::update: costs must be finite");
  }
  const int n_elite = std::min<int>(config.elite_count(), static_cast<int>(samples.size()));
  if (n_elite < 2) throw InvalidInput("cem::update: fewer than 2 elite samples");
  const auto elite_idx = select_elites(samples, costs, n_elite);
  std::vector<Vector> elites;
  elites.reserve(elite_idx.size());
  for (auto i : elite_idx) elites.push_back(samples[i]);
  const Eigen::Index d = elites.front().size();

  const int k_count = previous.components.empty() ? 1 : static_cast<int>(previous.components.size());
  if (k_count == 1) {
    Vector mean = Vector::Zero(d);
    for (const auto& e : elites) mean += e;
    mean /= static_cast<double>(elites.size());
    Matrix cov = Matrix::Zero(d, d);
    for (const auto& e : elites) {
      const Vector r = e - mean;
      cov.noalias() += r * r.transpose();
    }
    cov /= static_cast<double>(elites.size());
    GmmParams out;
    out.components.push_back({mean, detail::floored(cov, config.variance_floor), 1.0});
    return out;
  }

  // Expectation maximization on the elite set.
  GmmParams gmm = previous;
  const std::size_t n = elites.size();
  Matrix resp(static_cast<Eigen::Index>(n), k_count);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.em_iterations; ++it) {
    double ll = 0.0;
    std::vector<Eigen::LLT<Matrix>> llts;
    for (const auto& c : gmm.components) llts.emplace_back(c.covariance);
    for (std::size_t s = 0; s < n; ++s) {
      double max_log = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < k_count; ++k) {
        const auto& c = gmm.components[static_cast<std::size_t>(k)];
        const double lw = c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
        resp(static_cast<Eigen::Index>(s), k) =
            lw + detail::log_normal_density(elites[s], c.mean, llts[static_cast<std::size_t>(k)]);
        max_log = std::max(max_log, resp(static_cast<Eigen::Index>(s), k));
      }
      double total = 0.0;
      for (int k = 0; k < k_count; ++k) {
        auto& r = resp(static_cast<Eigen::Index>(s), k);
        r = std::exp(r - max_log);
        total += r;
      }
      for (int k = 0; k < k_count; ++k) resp(static_cast<Eigen::Index>(s), k) /= total;
      ll += max_log + std::log(total);
    }
    GmmParams next;
    for (int k = 0; k < k_count; ++k) {
      const double nk = resp.col(k).sum();
      const auto& old = gmm.components[static_cast<std::size_t>(k)];
      if (nk < 1e-12) {
        next.components.push_back({old.mean, old.covariance, 0.0});
        continue;
      }
      Vector mean = Vector::Zero(d);
      for (std::size_t s = 0; s < n; ++s) mean += resp(static_cast<Eigen::Index>(s), k) * elites[s];
      mean /= nk;
      Matrix cov = Matrix::Zero(d, d);
      for (std::size_t s = 0; s < n; ++s) {
        const Vector r = elites[s] - mean;
        cov.noalias() += resp(static_cast<Eigen::Index>(s), k) * (r * r.transpose());
      }
      cov /= nk;
      next.components.push_back({mean, detail::floored(cov, config.variance_floor),
                                 nk / static_cast<double>(n)});
    }
    gmm = std::move(next);
    if (std::abs(ll - prev_ll) < 1e-9 * std::max(1.0, std::abs(ll))) break;
    prev_ll = ll;
  }
  double wsum = 0.0;
  for (const auto& c : gmm.components) wsum += c.weight;
  for (auto& c : gmm.components) c.weight /= wsum;
  return gmm;
}

struct IterationRecord {
  int iteration = 0;
  double best_cost = 0.0;
  double mean_cost = 0.0;
  double max_cov_eig = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

struct Result {
  Vector best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<IterationRecord> history;
  int iterations = 0;
  bool converged = false;
  GmmParams final_gmm;
};

/// Sample, evaluate, refit until the largest covariance eigenvalue drops below
/// the threshold or the iteration cap is hit. Returns the best sample seen.
template <typename CostFn>
Result optimize(CostFn&& cost_fn, const GmmParams& init, const CemConfig& config,
                const Box& box) {
  config.validate();
  init.validate();
  std::mt19937_64 rng(config.seed);
  GmmParams gmm = init;
  Result result;
  std::vector<double> costs(static_cast<std::size_t>(config.samples));
  for (int it = 0; it < config.max_iterations; ++it) {
    auto samples = sample(gmm, config.samples, box, rng);
    double cost_sum = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      costs[s] = cost_fn(samples[s]);
      cost_sum += costs[s];
      if (costs[s] < result.best_cost || result.best.size() == 0) {
        result.best_cost = costs[s];
        result.best = samples[s];
      }
    }
    gmm = update(samples, costs, config, gmm);
    const double eig = gmm.max_covariance_eigenvalue();
    result.history.push_back({it, result.best_cost, cost_sum / static_cast<double>(samples.size()), eig});
    result.iterations = it + 1;
    if (eig < config.convergence_threshold) {
      result.converged = true;
      break;
    }
  }
  result.final_gmm = std::move(gmm);
  return result;
}

/// Trace CSV: "iter,best_cost,mean_cost,max_cov_eig".
inline void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << "iter,best_cost,mean_cost,max_cov_eig\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << format_double(r.best_cost, 17) << ','
        << format_double(r.mean_cost, 17) << ',' << format_double(r.max_cov_eig, 17) << '\n';
  }
}

}  // namespace stoec::cem
