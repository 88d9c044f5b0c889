// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "idfree/errors.hpp"
#include "idfree/rng.hpp"
#include "idfree/special_functions.hpp"

namespace idfree {

/// Diagonal Gaussian with one standard deviation shared across dimensions.
/// sigma == 0 is the degenerate static-embedding mode.
struct DiagGaussian {
  std::vector<double> mean;
  double sigma = 1.0;
};

/// Independent Beta marginal per dimension.
struct BetaPerDim {
  std::vector<double> alpha;
  std::vector<double> beta;
};

/// A user's local embedding-sampling law. Dimensions are independent, so the
/// joint density is the product of the marginals.
using EmbeddingDistribution = std::variant<DiagGaussian, BetaPerDim>;

// Samples stay strictly inside the Beta support so downstream log densities
// remain finite.
inline constexpr double kBetaSupportMargin = 1e-9;

inline std::size_t dim(const EmbeddingDistribution& dist) {
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) return g->mean.size();
  return std::get<BetaPerDim>(dist).alpha.size();
}

inline bool is_gaussian(const EmbeddingDistribution& dist) {
  return std::holds_alternative<DiagGaussian>(dist);
}

inline void validate(const EmbeddingDistribution& dist) {
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    if (g->mean.empty()) throw ShapeError("gaussian mean must be non-empty");
    if (!(g->sigma >= 0.0) || !std::isfinite(g->sigma)) {
      throw DomainError("gaussian sigma must be finite and >= 0");
    }
    return;
  }
  const auto& b = std::get<BetaPerDim>(dist);
  if (b.alpha.empty()) throw ShapeError("beta parameters must be non-empty");
  if (b.alpha.size() != b.beta.size()) {
    throw ShapeError("beta alpha/beta lengths differ");
  }
  for (std::size_t i = 0; i < b.alpha.size(); ++i) {
    if (!(b.alpha[i] > 0.0) || !(b.beta[i] > 0.0)) {
      throw DomainError("beta shape parameters must be positive");
    }
  }
}

/// Base noise feeding the reparameterized sampler: standard normal per
/// dimension in Gaussian mode, uniform strictly inside (0, 1) in Beta mode.
struct NoiseDraw {
  std::vector<double> values;
};

inline void draw_noise_into(const EmbeddingDistribution& dist, Rng& rng,
                            NoiseDraw& noise) {
  noise.values.resize(dim(dist));
  if (is_gaussian(dist)) {
    for (double& v : noise.values) v = rng.normal();
  } else {
    for (double& v : noise.values) v = rng.uniform();
  }
}

inline NoiseDraw draw_noise(const EmbeddingDistribution& dist, Rng& rng) {
  NoiseDraw noise;
  draw_noise_into(dist, rng, noise);
  return noise;
}

namespace detail {

// Marsaglia-Tsang gamma generator; shape < 1 is boosted through shape + 1.
inline double gamma_draw(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_draw(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z;
    double v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double z2 = z * z;
    if (u < 1.0 - 0.0331 * z2 * z2) return d * v;
    if (std::log(u) < 0.5 * z2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double clamp_to_beta_support(double x) {
  return std::clamp(x, kBetaSupportMargin, 1.0 - kBetaSupportMargin);
}

inline double beta_inverse_clamped(double xi, double a, double b) {
  return clamp_to_beta_support(inverse_reg_inc_beta(xi, a, b));
}

}  // namespace detail

/// Draws one embedding. The Beta route goes through a gamma ratio, which is
/// a different code path from the inverse-CDF reparameterized sampler; the
/// test suite checks the two agree in distribution.
inline std::vector<double> sample(const EmbeddingDistribution& dist, Rng& rng) {
  std::vector<double> u(dim(dist));
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = g->mean[i] + g->sigma * (g->sigma > 0.0 ? rng.normal() : 0.0);
    }
    return u;
  }
  const auto& b = std::get<BetaPerDim>(dist);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ga = detail::gamma_draw(b.alpha[i], rng);
    const double gb = detail::gamma_draw(b.beta[i], rng);
    u[i] = detail::clamp_to_beta_support(ga / (ga + gb));
  }
  return u;
}

/// Joint log density, the sum of per-dimension marginal log densities.
/// Beta mode requires every coordinate strictly inside (0, 1).
inline double log_pdf(const EmbeddingDistribution& dist,
                      std::span<const double> u) {
  if (u.size() != dim(dist)) throw ShapeError("log_pdf: dimension mismatch");
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    if (g->sigma == 0.0) {
      // Point mass: +inf on the mean, -inf elsewhere.
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] != g->mean[i]) {
          return -std::numeric_limits<double>::infinity();
        }
      }
      return std::numeric_limits<double>::infinity();
    }
    const double inv_two_var = 1.0 / (2.0 * g->sigma * g->sigma);
    const double log_norm =
        -0.5 * std::log(2.0 * std::numbers::pi * g->sigma * g->sigma);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double centered = u[i] - g->mean[i];
      acc += log_norm - centered * centered * inv_two_var;
    }
    return acc;
  }
  const auto& b = std::get<BetaPerDim>(dist);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] < 1.0)) {
      throw DomainError("log_pdf: beta coordinate outside (0, 1)");
    }
    acc += beta_log_pdf(u[i], b.alpha[i], b.beta[i]);
  }
  return acc;
}

/// Marginal CDF of one dimension. Inputs outside the support return 0 or 1.
inline double cdf_marginal(const EmbeddingDistribution& dist, std::size_t d,
                           double x) {
  if (d >= dim(dist)) throw ShapeError("cdf_marginal: dimension out of range");
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    if (g->sigma == 0.0) return x >= g->mean[d] ? 1.0 : 0.0;
    return std_normal_cdf((x - g->mean[d]) / g->sigma);
  }
  const auto& b = std::get<BetaPerDim>(dist);
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return reg_inc_beta(x, b.alpha[d], b.beta[d]);
}

/// Deterministic map from base noise to an embedding: the Gaussian route is
/// affine, the Beta route inverts the marginal CDF at the uniform draw.
inline std::vector<double> reparam_sample(const EmbeddingDistribution& dist,
                                          const NoiseDraw& noise) {
  if (noise.values.size() != dim(dist)) {
    throw ShapeError("reparam_sample: noise dimension mismatch");
  }
  std::vector<double> u(noise.values.size());
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = g->mean[i] + g->sigma * noise.values[i];
    }
    return u;
  }
  const auto& b = std::get<BetaPerDim>(dist);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(noise.values[i] > 0.0 && noise.values[i] < 1.0)) {
      throw DomainError("reparam_sample: beta noise outside (0, 1)");
    }
    u[i] = detail::beta_inverse_clamped(noise.values[i], b.alpha[i], b.beta[i]);
  }
  return u;
}

/// Gradient with respect to distribution parameters, mirroring the family.
struct GaussianGrad {
  std::vector<double> mean;
};
struct BetaGrad {
  std::vector<double> alpha;
  std::vector<double> beta;
};
using DistGradient = std::variant<GaussianGrad, BetaGrad>;

inline DistGradient zero_grad_like(const EmbeddingDistribution& dist) {
  const std::size_t n = dim(dist);
  if (is_gaussian(dist)) return GaussianGrad{std::vector<double>(n, 0.0)};
  return BetaGrad{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

inline void grad_accumulate(DistGradient& acc, const DistGradient& g) {
  if (auto* ga = std::get_if<GaussianGrad>(&acc)) {
    const auto& gg = std::get<GaussianGrad>(g);
    for (std::size_t i = 0; i < ga->mean.size(); ++i) ga->mean[i] += gg.mean[i];
    return;
  }
  auto& ba = std::get<BetaGrad>(acc);
  const auto& bg = std::get<BetaGrad>(g);
  for (std::size_t i = 0; i < ba.alpha.size(); ++i) {
    ba.alpha[i] += bg.alpha[i];
    ba.beta[i] += bg.beta[i];
  }
}

inline void grad_scale(DistGradient& g, double s) {
  if (auto* gg = std::get_if<GaussianGrad>(&g)) {
    for (double& v : gg->mean) v *= s;
    return;
  }
  auto& bg = std::get<BetaGrad>(g);
  for (double& v : bg.alpha) v *= s;
  for (double& v : bg.beta) v *= s;
}

inline double grad_norm(const DistGradient& g) {
  double acc = 0.0;
  if (const auto* gg = std::get_if<GaussianGrad>(&g)) {
    for (double v : gg->mean) acc += v * v;
  } else {
    const auto& bg = std::get<BetaGrad>(g);
    for (double v : bg.alpha) acc += v * v;
    for (double v : bg.beta) acc += v * v;
  }
  return std::sqrt(acc);
}

/// Parameter gradient of the reparameterized sample, chained with an upstream
/// gradient with respect to the embedding.
///
/// Gaussian mode trains the mean only (sigma is fixed), so the mean gradient
/// is the upstream gradient itself. Beta mode differentiates the inverse CDF
/// implicitly: du/da = -(dI_u(a,b)/da) / pdf(u), with the CDF's parameter
/// derivatives taken by central finite differences.
///
/// A coordinate whose density falls below 1e-12 (a near-boundary sample) is
/// degenerate: with `skipped` supplied its contribution is zeroed and
/// counted, otherwise NumericalError is thrown.
inline DistGradient reparam_grad_params(const EmbeddingDistribution& dist,
                                        const NoiseDraw& noise,
                                        std::span<const double> upstream,
                                        std::size_t* skipped = nullptr) {
  if (noise.values.size() != dim(dist) || upstream.size() != dim(dist)) {
    throw ShapeError("reparam_grad_params: dimension mismatch");
  }
  for (double v : upstream) {
    if (!std::isfinite(v)) {
      throw NumericalError("reparam_grad_params: non-finite upstream gradient");
    }
  }
  if (is_gaussian(dist)) {
    return GaussianGrad{std::vector<double>(upstream.begin(), upstream.end())};
  }
  const auto& b = std::get<BetaPerDim>(dist);
  BetaGrad grad{std::vector<double>(b.alpha.size(), 0.0),
                std::vector<double>(b.alpha.size(), 0.0)};
  constexpr double kPdfFloor = 1e-12;
  for (std::size_t i = 0; i < b.alpha.size(); ++i) {
    const double a = b.alpha[i];
    const double bb = b.beta[i];
    const double xi = noise.values[i];
    const double u = detail::beta_inverse_clamped(xi, a, bb);
    const double pdf = std::exp(beta_log_pdf(u, a, bb));
    if (pdf < kPdfFloor) {
      if (skipped == nullptr) {
        throw NumericalError("reparam_grad_params: vanishing beta density");
      }
      ++*skipped;
      continue;
    }
    const double ha = std::min(1e-5 * std::max(1.0, a), 0.5 * a);
    const double hb = std::min(1e-5 * std::max(1.0, bb), 0.5 * bb);
    const double di_da =
        (reg_inc_beta(u, a + ha, bb) - reg_inc_beta(u, a - ha, bb)) /
        (2.0 * ha);
    const double di_db =
        (reg_inc_beta(u, a, bb + hb) - reg_inc_beta(u, a, bb - hb)) /
        (2.0 * hb);
    grad.alpha[i] = upstream[i] * (-di_da / pdf);
    grad.beta[i] = upstream[i] * (-di_db / pdf);
  }
  return grad;
}

inline nlohmann::json to_json(const EmbeddingDistribution& dist) {
  nlohmann::json j;
  if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
    j["kind"] = "gaussian";
    j["d"] = g->mean.size();
    j["mean"] = g->mean;
    j["sigma"] = g->sigma;
  } else {
    const auto& b = std::get<BetaPerDim>(dist);
    j["kind"] = "beta";
    j["d"] = b.alpha.size();
    j["alpha"] = b.alpha;
    j["beta"] = b.beta;
  }
  return j;
}

inline EmbeddingDistribution distribution_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  EmbeddingDistribution dist;
  if (kind == "gaussian") {
    dist = DiagGaussian{j.at("mean").get<std::vector<double>>(),
                        j.at("sigma").get<double>()};
  } else if (kind == "beta") {
    dist = BetaPerDim{j.at("alpha").get<std::vector<double>>(),
                      j.at("beta").get<std::vector<double>>()};
  } else {
    throw ConfigError("unknown distribution kind: " + kind);
  }
  if (j.contains("d") && j.at("d").get<std::size_t>() != dim(dist)) {
    throw ShapeError("distribution dimension field disagrees with parameters");
  }
  validate(dist);
  return dist;
}

/// A weighted combination of embedding distributions. Distinct component
/// lists can describe the same joint law; that ambiguity is what the
/// identifiability checks probe.
struct MixtureComponent {
  double weight = 0.0;
  EmbeddingDistribution dist;
};

struct MixtureRepresentation {
  std::vector<MixtureComponent> components;
};

inline void validate_mixture(const MixtureRepresentation& m) {
  if (m.components.empty()) throw ShapeError("mixture has no components");
  const std::size_t d = dim(m.components.front().dist);
  double total = 0.0;
  for (const auto& c : m.components) {
    if (c.weight < 0.0) throw DomainError("mixture weight must be >= 0");
    if (dim(c.dist) != d) throw ShapeError("mixture component dims differ");
    validate(c.dist);
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw DomainError("mixture weights must sum to 1");
  }
}

inline std::size_t mixture_dim(const MixtureRepresentation& m) {
  return dim(m.components.front().dist);
}

/// Joint mixture density; u must lie inside every component's support.
inline double mixture_pdf(const MixtureRepresentation& m,
                          std::span<const double> u) {
  double acc = 0.0;
  for (const auto& c : m.components) acc += c.weight * std::exp(log_pdf(c.dist, u));
  return acc;
}

inline double mixture_cdf_marginal(const MixtureRepresentation& m,
                                   std::size_t d, double x) {
  double acc = 0.0;
  for (const auto& c : m.components) acc += c.weight * cdf_marginal(c.dist, d, x);
  return acc;
}

}  // namespace idfree
