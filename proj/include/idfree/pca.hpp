// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "idfree/errors.hpp"
#include "idfree/rng.hpp"

namespace idfree {

namespace detail {

// Dominant eigenvector of a symmetric matrix by power iteration. The start
// vector is pseudorandom from a fixed seed; the sign is normalized so the
// largest-magnitude entry is positive.
inline std::vector<double> power_iteration(const std::vector<double>& mat,
                                           std::size_t n, double tol,
                                           int max_iter) {
  Rng rng(0x9d2c5680);
  std::vector<double> v(n);
  for (double& e : v) e = rng.normal();
  double norm = 0.0;
  for (double e : v) norm += e * e;
  norm = std::sqrt(norm);
  for (double& e : v) e /= norm;

  std::vector<double> next(n);
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* row = &mat[i * n];
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
      next[i] = acc;
    }
    norm = 0.0;
    for (double e : next) norm += e * e;
    norm = std::sqrt(norm);
    if (norm == 0.0) return v;  // zero matrix: any unit vector is fine
    double align = 0.0;
    for (std::size_t i = 0; i < n; ++i) align += next[i] * v[i];
    const double flip = align < 0.0 ? -1.0 : 1.0;
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = flip * next[i] / norm;
      delta = std::max(delta, std::fabs(next[i] - v[i]));
    }
    v.swap(next);
    if (delta < tol) {
      std::size_t peak = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (std::fabs(v[i]) > std::fabs(v[peak])) peak = i;
      }
      if (v[peak] < 0.0) {
        for (double& e : v) e = -e;
      }
      return v;
    }
  }
  throw ConvergenceError("power iteration did not converge");
}

}  // namespace detail

/// Centers the rows and projects them onto the top two principal components
/// (power iteration with deflation, tolerance 1e-9).
inline std::vector<std::array<double, 2>> project_top2(
    const std::vector<std::vector<double>>& rows, double tol = 1e-9,
    int max_iter = 100000) {
  if (rows.size() < 2) throw ConfigError("projection needs at least 2 rows");
  const std::size_t d = rows.front().size();
  if (d < 2) throw ConfigError("projection needs dimension >= 2");
  for (const auto& r : rows) {
    if (r.size() != d) throw ShapeError("projection rows differ in length");
  }

  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());

  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - mean[j];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        cov[i * d + j] += centered[i] * centered[j];
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(rows.size() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] *= scale;
      cov[j * d + i] = cov[i * d + j];
    }
  }

  const std::vector<double> v1 = detail::power_iteration(cov, d, tol, max_iter);
  double lambda1 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += cov[i * d + j] * v1[j];
    lambda1 += v1[i] * acc;
  }
  std::vector<double> deflated = cov;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      deflated[i * d + j] -= lambda1 * v1[i] * v1[j];
    }
  }
  const std::vector<double> v2 =
      detail::power_iteration(deflated, d, tol, max_iter);

  std::vector<std::array<double, 2>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    double p1 = 0.0;
    double p2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - mean[j];
      p1 += c * v1[j];
      p2 += c * v2[j];
    }
    out.push_back({p1, p2});
  }
  return out;
}

/// Cluster separability of the projected points: the mean squared distance
/// between two distinct users' centroids over the mean squared within-user
/// deviation. Mixed embeddings score near zero, identical distributions
/// around 0.2, and tight per-user clusters score large.
inline double separability_ratio(const std::vector<std::array<double, 2>>& pts,
                                 std::span<const int> user_tags) {
  if (pts.size() != user_tags.size() || pts.empty()) {
    throw ShapeError("separability_ratio: tag/point mismatch");
  }
  int max_tag = 0;
  for (int t : user_tags) max_tag = std::max(max_tag, t);
  const std::size_t n_users = static_cast<std::size_t>(max_tag) + 1;
  std::vector<std::array<double, 2>> centroid(n_users, {0.0, 0.0});
  std::vector<int> count(n_users, 0);
  std::array<double, 2> global{0.0, 0.0};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto t = static_cast<std::size_t>(user_tags[i]);
    centroid[t][0] += pts[i][0];
    centroid[t][1] += pts[i][1];
    count[t]++;
    global[0] += pts[i][0];
    global[1] += pts[i][1];
  }
  global[0] /= static_cast<double>(pts.size());
  global[1] /= static_cast<double>(pts.size());
  int active_users = 0;
  double centroid_var = 0.0;
  for (std::size_t t = 0; t < n_users; ++t) {
    if (count[t] == 0) continue;
    centroid[t][0] /= count[t];
    centroid[t][1] /= count[t];
    const double dx = centroid[t][0] - global[0];
    const double dy = centroid[t][1] - global[1];
    centroid_var += dx * dx + dy * dy;
    ++active_users;
  }
  centroid_var /= active_users;
  // Mean squared distance between two distinct centroids.
  const double between = active_users < 2
                             ? 0.0
                             : 2.0 * centroid_var * active_users /
                                   (active_users - 1.0);
  double within = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto t = static_cast<std::size_t>(user_tags[i]);
    const double dx = pts[i][0] - centroid[t][0];
    const double dy = pts[i][1] - centroid[t][1];
    within += dx * dx + dy * dy;
  }
  within /= static_cast<double>(pts.size());
  if (within <= 0.0) return std::numeric_limits<double>::infinity();
  return between / within;
}

/// CSV dump of the projection. The user tag column comes from harness ground
/// truth for plot coloring; it is never derived from wire data.
inline void write_projection_csv(const std::string& path,
                                 const std::vector<std::array<double, 2>>& pts,
                                 std::span<const int> user_tags) {
  if (pts.size() != user_tags.size()) {
    throw ShapeError("write_projection_csv: tag/point mismatch");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open projection CSV for writing: " + path);
  out << "x,y,user\n";
  char buf[96];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%d\n", pts[i][0], pts[i][1],
                  user_tags[i]);
    out << buf;
  }
}

}  // namespace idfree
