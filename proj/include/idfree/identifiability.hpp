// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "idfree/distribution.hpp"
#include "idfree/errors.hpp"

namespace idfree {

/// Splits one Beta component along one dimension into two components whose
/// weighted sum has the identical joint density: weight w with shapes
/// (alpha, beta) becomes w*alpha/(alpha+beta) with alpha+1 plus
/// w*beta/(alpha+beta) with beta+1. Repeated application manufactures
/// arbitrarily many parameter-distinct representations of the same mixture.
inline MixtureRepresentation split_beta_component(
    const MixtureRepresentation& mix, std::size_t component, std::size_t d) {
  validate_mixture(mix);
  if (component >= mix.components.size()) {
    throw ConfigError("split_beta_component: component index out of range");
  }
  const auto* b = std::get_if<BetaPerDim>(&mix.components[component].dist);
  if (b == nullptr) {
    throw ConfigError("split_beta_component: component is not BetaPerDim");
  }
  if (d >= b->alpha.size()) {
    throw ConfigError("split_beta_component: dimension out of range");
  }
  const double a = b->alpha[d];
  const double bb = b->beta[d];
  const double c1 = a / (a + bb);
  const double c2 = bb / (a + bb);

  MixtureRepresentation out;
  out.components.reserve(mix.components.size() + 1);
  for (std::size_t i = 0; i < mix.components.size(); ++i) {
    if (i != component) {
      out.components.push_back(mix.components[i]);
      continue;
    }
    BetaPerDim up = *b;
    up.alpha[d] += 1.0;
    BetaPerDim down = *b;
    down.beta[d] += 1.0;
    const double w = mix.components[i].weight;
    out.components.push_back({w * c1, EmbeddingDistribution{up}});
    out.components.push_back({w * c2, EmbeddingDistribution{down}});
  }
  return out;
}

struct NonIdentReport {
  double max_pdf_diff = 0.0;
  double max_cdf_diff = 0.0;
  bool distinct_representation = false;
  bool pass = false;
};

namespace detail {

// Approximate multiset equality of component lists (weights and parameters),
// via canonical sorting and elementwise comparison at tolerance 1e-12.
inline bool same_representation(const MixtureRepresentation& m1,
                                const MixtureRepresentation& m2) {
  if (m1.components.size() != m2.components.size()) return false;
  auto key = [](const MixtureComponent& c) {
    std::vector<double> k{c.weight, is_gaussian(c.dist) ? 0.0 : 1.0};
    if (const auto* g = std::get_if<DiagGaussian>(&c.dist)) {
      k.push_back(g->sigma);
      k.insert(k.end(), g->mean.begin(), g->mean.end());
    } else {
      const auto& b = std::get<BetaPerDim>(c.dist);
      k.insert(k.end(), b.alpha.begin(), b.alpha.end());
      k.insert(k.end(), b.beta.begin(), b.beta.end());
    }
    return k;
  };
  std::vector<std::vector<double>> k1;
  std::vector<std::vector<double>> k2;
  for (const auto& c : m1.components) k1.push_back(key(c));
  for (const auto& c : m2.components) k2.push_back(key(c));
  std::sort(k1.begin(), k1.end());
  std::sort(k2.begin(), k2.end());
  for (std::size_t i = 0; i < k1.size(); ++i) {
    if (k1[i].size() != k2[i].size()) return false;
    for (std::size_t j = 0; j < k1[i].size(); ++j) {
      if (std::fabs(k1[i][j] - k2[i][j]) > 1e-12) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Compares two mixture representations on a dense grid: the maximum joint
/// density gap over [1e-3, 1-1e-3]^d and the maximum per-dimension marginal
/// CDF gap. A PASS certifies a non-identifiability witness: the densities
/// agree within tol while the component lists genuinely differ.
inline NonIdentReport verify_nonidentifiability(const MixtureRepresentation& m1,
                                                const MixtureRepresentation& m2,
                                                int grid_resolution,
                                                double tol) {
  validate_mixture(m1);
  validate_mixture(m2);
  if (mixture_dim(m1) != mixture_dim(m2)) {
    throw ShapeError("mixtures have different dimensions");
  }
  if (grid_resolution < 2) throw ConfigError("grid resolution must be >= 2");
  const std::size_t d = mixture_dim(m1);
  double cells = 1.0;
  for (std::size_t i = 0; i < d; ++i) cells *= grid_resolution;
  if (cells > 2e8) {
    throw ConfigError("density grid too large; use a low-dimensional witness");
  }

  constexpr double kLo = 1e-3;
  constexpr double kHi = 1.0 - 1e-3;
  std::vector<double> grid(static_cast<std::size_t>(grid_resolution));
  for (int i = 0; i < grid_resolution; ++i) {
    grid[static_cast<std::size_t>(i)] =
        kLo + (kHi - kLo) * i / (grid_resolution - 1);
  }

  NonIdentReport report;
  report.distinct_representation = !detail::same_representation(m1, m2);

  // Per-component, per-dimension marginal density tables; the joint density
  // at a grid point is then a weighted product of table entries.
  auto tables = [&](const MixtureRepresentation& m) {
    std::vector<std::vector<std::vector<double>>> t(m.components.size());
    for (std::size_t c = 0; c < m.components.size(); ++c) {
      t[c].resize(d);
      for (std::size_t k = 0; k < d; ++k) {
        t[c][k].resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
          if (const auto* g = std::get_if<DiagGaussian>(&m.components[c].dist)) {
            const double z = (grid[i] - g->mean[k]) / g->sigma;
            t[c][k][i] = std::exp(-0.5 * z * z) /
                         (g->sigma * std::sqrt(2.0 * std::numbers::pi));
          } else {
            const auto& b = std::get<BetaPerDim>(m.components[c].dist);
            t[c][k][i] = std::exp(beta_log_pdf(grid[i], b.alpha[k], b.beta[k]));
          }
        }
      }
    }
    return t;
  };
  const auto t1 = tables(m1);
  const auto t2 = tables(m2);

  std::vector<std::size_t> idx(d, 0);
  for (;;) {
    double p1 = 0.0;
    for (std::size_t c = 0; c < m1.components.size(); ++c) {
      double prod = m1.components[c].weight;
      for (std::size_t k = 0; k < d; ++k) prod *= t1[c][k][idx[k]];
      p1 += prod;
    }
    double p2 = 0.0;
    for (std::size_t c = 0; c < m2.components.size(); ++c) {
      double prod = m2.components[c].weight;
      for (std::size_t k = 0; k < d; ++k) prod *= t2[c][k][idx[k]];
      p2 += prod;
    }
    report.max_pdf_diff = std::max(report.max_pdf_diff, std::fabs(p1 - p2));

    std::size_t k = 0;
    while (k < d && ++idx[k] == grid.size()) {
      idx[k] = 0;
      ++k;
    }
    if (k == d) break;
  }

  for (std::size_t k = 0; k < d; ++k) {
    for (double x : grid) {
      const double c1 = mixture_cdf_marginal(m1, k, x);
      const double c2 = mixture_cdf_marginal(m2, k, x);
      report.max_cdf_diff = std::max(report.max_cdf_diff, std::fabs(c1 - c2));
    }
  }

  report.pass = report.distinct_representation && report.max_pdf_diff <= tol &&
                report.max_cdf_diff <= tol;
  return report;
}

}  // namespace idfree
