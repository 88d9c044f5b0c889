// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "idfree/distribution.hpp"
#include "idfree/errors.hpp"
#include "idfree/rng.hpp"
#include "idfree/special_functions.hpp"
#include "idfree/vec.hpp"

namespace idfree {

/// Empirical attribution-attack outcome paired with the analytic lower bound
/// on misattribution (present only when the Gaussian training-budget
/// parameters are known).
struct AttackReport {
  double empirical_misattribution = 0.0;
  std::optional<double> theoretical_bound;
  int samples_per_user = 0;
  std::vector<double> per_user_rates;
};

namespace detail {

inline bool all_gaussian_equal_sigma(
    std::span<const EmbeddingDistribution> dists, double& sigma_out) {
  const auto* first = std::get_if<DiagGaussian>(&dists[0]);
  if (first == nullptr) return false;
  for (const auto& d : dists) {
    const auto* g = std::get_if<DiagGaussian>(&d);
    if (g == nullptr || g->sigma != first->sigma) return false;
  }
  sigma_out = first->sigma;
  return true;
}

}  // namespace detail

/// The Bayes-optimal attacker: the index maximizing log prior + log density,
/// ties broken toward the lowest index. For equal-sigma Gaussians this is
/// evaluated in closed form (and reduces to nearest-mean under a uniform
/// prior); sigma == 0 degenerates to exact nearest-mean matching.
inline std::size_t posterior_argmax(std::span<const EmbeddingDistribution> dists,
                                    std::span<const double> prior,
                                    std::span<const double> u) {
  if (dists.empty()) throw ConfigError("posterior_argmax: no distributions");
  if (prior.size() != dists.size()) {
    throw ConfigError("posterior_argmax: prior length mismatch");
  }
  double prior_total = 0.0;
  for (double p : prior) prior_total += p;
  if (std::fabs(prior_total - 1.0) > 1e-9) {
    throw ConfigError("posterior_argmax: prior must sum to 1");
  }

  double sigma = 0.0;
  if (detail::all_gaussian_equal_sigma(dists, sigma)) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dists.size(); ++k) {
      const auto& g = std::get<DiagGaussian>(dists[k]);
      const double d2 = l2_distance(g.mean, u);
      const double score = sigma > 0.0
                               ? std::log(prior[k]) -
                                     d2 * d2 / (2.0 * sigma * sigma)
                               : -d2 * d2;
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    return best;
  }

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  bool any_support = false;
  for (std::size_t k = 0; k < dists.size(); ++k) {
    double log_density;
    try {
      log_density = log_pdf(dists[k], u);
    } catch (const DomainError&) {
      continue;  // outside this component's support
    }
    any_support = true;
    const double score = std::log(prior[k]) + log_density;
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  if (!any_support) {
    throw DomainError("posterior_argmax: embedding outside every support");
  }
  return best;
}

/// Monte Carlo misattribution estimate: draw `draws_per_user` embeddings per
/// user and count how often the attacker picks a different user. The
/// theoretical bound is attached when supplied by the caller.
inline AttackReport misattribution_mc(
    std::span<const EmbeddingDistribution> dists, std::span<const double> prior,
    int draws_per_user, Rng& rng,
    std::optional<double> theoretical_bound = std::nullopt) {
  if (draws_per_user < 1) throw ConfigError("misattribution_mc: draws must be >= 1");
  AttackReport report;
  report.samples_per_user = draws_per_user;
  report.theoretical_bound = theoretical_bound;
  double total = 0.0;
  for (std::size_t n = 0; n < dists.size(); ++n) {
    int wrong = 0;
    for (int m = 0; m < draws_per_user; ++m) {
      const std::vector<double> u = sample(dists[n], rng);
      if (posterior_argmax(dists, prior, u) != n) ++wrong;
    }
    const double rate = static_cast<double>(wrong) / draws_per_user;
    report.per_user_rates.push_back(rate);
    total += rate;
  }
  report.empirical_misattribution = total / static_cast<double>(dists.size());
  return report;
}

/// Analytic lower bound on misattribution for equal-sigma Gaussians trained
/// from a shared initialization with clipped steps under a uniform prior:
/// 1 - Phi(learning_rate * steps * clip_norm / sigma)^(num_users - 1).
inline double misattribution_lower_bound(double learning_rate, double steps,
                                         double clip_norm, double sigma,
                                         int num_users) {
  if (!(sigma > 0.0)) throw DomainError("bound requires sigma > 0");
  if (num_users < 1) throw ConfigError("bound requires at least one user");
  const double phi =
      std_normal_cdf(learning_rate * steps * clip_norm / sigma);
  return 1.0 - std::pow(phi, static_cast<double>(num_users - 1));
}

/// Probability that a sample from an isotropic Gaussian lands closer to its
/// own mean than to another mean at the given distance: Phi(distance / 2*sigma).
/// Dimension-free.
inline double closer_to_own_mean_prob(double distance, double sigma) {
  if (!(distance >= 0.0)) throw DomainError("distance must be >= 0");
  if (!(sigma > 0.0)) throw DomainError("sigma must be > 0");
  return std_normal_cdf(distance / (2.0 * sigma));
}

struct GapCheckReport {
  double max_gap = 0.0;
  double bound = 0.0;
  bool pass = false;
};

/// Checks every pairwise mean distance against the shared-initialization
/// training bound 2 * learning_rate * steps * clip_norm.
inline GapCheckReport pairwise_gap_check(
    std::span<const EmbeddingDistribution> dists, double learning_rate,
    double steps, double clip_norm) {
  GapCheckReport report;
  report.bound = 2.0 * learning_rate * steps * clip_norm;
  for (const auto& d : dists) {
    if (!is_gaussian(d)) {
      throw ConfigError("pairwise_gap_check: all distributions must be Gaussian");
    }
  }
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const auto& a = std::get<DiagGaussian>(dists[i]);
    for (std::size_t j = i + 1; j < dists.size(); ++j) {
      const auto& b = std::get<DiagGaussian>(dists[j]);
      report.max_gap = std::max(report.max_gap, l2_distance(a.mean, b.mean));
    }
  }
  report.pass = report.max_gap <= report.bound + 1e-9;
  return report;
}

inline nlohmann::json to_json(const AttackReport& r) {
  nlohmann::json j;
  j["empirical_misattribution"] = r.empirical_misattribution;
  if (r.theoretical_bound.has_value()) {
    j["theoretical_bound"] = *r.theoretical_bound;
  } else {
    j["theoretical_bound"] = nullptr;
  }
  j["samples_per_user"] = r.samples_per_user;
  j["per_user_rates"] = r.per_user_rates;
  return j;
}

}  // namespace idfree
