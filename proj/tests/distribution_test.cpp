// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#include "idfree/distribution.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace {

using idfree::BetaPerDim;
using idfree::DiagGaussian;
using idfree::EmbeddingDistribution;
using idfree::NoiseDraw;
using idfree::Rng;

TEST(Sample, DegenerateGaussianIsExactlyTheMean) {
  const EmbeddingDistribution dist = DiagGaussian{{0.3, -0.1}, 0.0};
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto u = idfree::sample(dist, rng);
    EXPECT_DOUBLE_EQ(u[0], 0.3);
    EXPECT_DOUBLE_EQ(u[1], -0.1);
  }
}

TEST(Sample, UniformBetaHasMeanHalf) {
  const EmbeddingDistribution dist = BetaPerDim{{1.0}, {1.0}};
  Rng rng(2);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) total += idfree::sample(dist, rng)[0];
  EXPECT_NEAR(total / n, 0.5, 0.005);
}

TEST(Sample, GaussianPerCoordinateVarianceMatchesSigma) {
  const int d = 8;
  const EmbeddingDistribution dist =
      DiagGaussian{std::vector<double>(d, 0.0), 0.2};
  Rng rng(3);
  const int n = 100000;
  std::vector<double> sum(d, 0.0);
  std::vector<double> sum_sq(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto u = idfree::sample(dist, rng);
    for (int j = 0; j < d; ++j) {
      sum[j] += u[j];
      sum_sq[j] += u[j] * u[j];
    }
  }
  for (int j = 0; j < d; ++j) {
    const double mean = sum[j] / n;
    const double var = sum_sq[j] / n - mean * mean;
    EXPECT_NEAR(var, 0.04, 0.002) << "coordinate " << j;
  }
}

TEST(LogPdf, KnownValues) {
  EXPECT_NEAR(idfree::log_pdf(BetaPerDim{{1.0}, {1.0}}, std::vector<double>{0.3}),
              0.0, 1e-12);
  EXPECT_NEAR(
      idfree::log_pdf(DiagGaussian{{0.0}, 1.0}, std::vector<double>{0.0}),
      -0.918938533205, 1e-9);
  // Beta(2,3) density at 0.4 is 12 * 0.4 * 0.36 = 1.728; log frozen from the
  // Lanczos-gamma oracle.
  EXPECT_NEAR(
      idfree::log_pdf(BetaPerDim{{2.0}, {3.0}}, std::vector<double>{0.4}),
      0.546964670382, 1e-9);
  EXPECT_NEAR(
      idfree::log_pdf(BetaPerDim{{2.0}, {3.0}}, std::vector<double>{0.4}),
      std::log(oracles::beta_pdf_oracle(0.4, 2.0, 3.0)), 1e-12);
}

TEST(LogPdf, SumsOverIndependentDimensions) {
  const BetaPerDim b{{2.0, 4.0}, {3.0, 1.5}};
  const std::vector<double> u{0.4, 0.8};
  const double joint = idfree::log_pdf(b, u);
  const double split =
      idfree::log_pdf(BetaPerDim{{2.0}, {3.0}}, std::vector<double>{0.4}) +
      idfree::log_pdf(BetaPerDim{{4.0}, {1.5}}, std::vector<double>{0.8});
  EXPECT_NEAR(joint, split, 1e-12);
}

TEST(LogPdf, BetaOutsideSupportIsDomainError) {
  const EmbeddingDistribution dist = BetaPerDim{{2.0}, {3.0}};
  EXPECT_THROW(idfree::log_pdf(dist, std::vector<double>{0.0}),
               idfree::DomainError);
  EXPECT_THROW(idfree::log_pdf(dist, std::vector<double>{1.0}),
               idfree::DomainError);
  EXPECT_THROW(idfree::log_pdf(dist, std::vector<double>{-0.2}),
               idfree::DomainError);
}

TEST(CdfMarginal, KnownValues) {
  EXPECT_NEAR(idfree::cdf_marginal(BetaPerDim{{1.0}, {1.0}}, 0, 0.3), 0.3,
              1e-13);
  EXPECT_NEAR(idfree::cdf_marginal(DiagGaussian{{0.0}, 1.0}, 0, 0.0), 0.5,
              1e-13);
  EXPECT_NEAR(idfree::cdf_marginal(BetaPerDim{{2.0}, {2.0}}, 0, 0.5), 0.5,
              1e-13);
  EXPECT_DOUBLE_EQ(idfree::cdf_marginal(BetaPerDim{{2.0}, {2.0}}, 0, -1.0), 0.0);
  EXPECT_DOUBLE_EQ(idfree::cdf_marginal(BetaPerDim{{2.0}, {2.0}}, 0, 2.0), 1.0);
}

TEST(ReparamSample, GaussianAffineMap) {
  const EmbeddingDistribution dist = DiagGaussian{{0.1}, 0.2};
  const NoiseDraw noise{{1.5}};
  const auto u = idfree::reparam_sample(dist, noise);
  EXPECT_NEAR(u[0], 0.4, 1e-15);
}

TEST(ReparamSample, UniformBetaIsIdentityOnNoise) {
  const EmbeddingDistribution dist = BetaPerDim{{1.0}, {1.0}};
  const NoiseDraw noise{{0.7}};
  EXPECT_NEAR(idfree::reparam_sample(dist, noise)[0], 0.7, 1e-9);
}

TEST(ReparamSample, DeterministicGivenNoise) {
  const EmbeddingDistribution dist = BetaPerDim{{2.3, 0.8}, {1.1, 4.0}};
  const NoiseDraw noise{{0.42, 0.87}};
  const auto a = idfree::reparam_sample(dist, noise);
  const auto b = idfree::reparam_sample(dist, noise);
  EXPECT_EQ(a, b);
}

TEST(ReparamGrad, GaussianMeanGradientIsUpstream) {
  const EmbeddingDistribution dist = DiagGaussian{{0.1, -0.4}, 0.2};
  const NoiseDraw noise{{0.3, -1.2}};
  const std::vector<double> upstream{2.5, -0.75};
  const auto grad = std::get<idfree::GaussianGrad>(
      idfree::reparam_grad_params(dist, noise, upstream));
  EXPECT_DOUBLE_EQ(grad.mean[0], 2.5);
  EXPECT_DOUBLE_EQ(grad.mean[1], -0.75);
}

TEST(ReparamGrad, SymmetricBetaAtMedianHasOppositeShapeGradients) {
  const EmbeddingDistribution dist = BetaPerDim{{2.0}, {2.0}};
  const NoiseDraw noise{{0.5}};
  const std::vector<double> upstream{1.0};
  const auto grad = std::get<idfree::BetaGrad>(
      idfree::reparam_grad_params(dist, noise, upstream));
  EXPECT_NEAR(idfree::reparam_sample(dist, noise)[0], 0.5, 1e-10);
  EXPECT_NEAR(grad.alpha[0], -grad.beta[0], 1e-8);
  EXPECT_GT(std::fabs(grad.alpha[0]), 1e-4);
}

TEST(ReparamGrad, MatchesFiniteDifferenceOfTheInverseCdf) {
  const double a = 2.0;
  const double b = 3.0;
  const double xi = 0.4;
  const EmbeddingDistribution dist = BetaPerDim{{a}, {b}};
  const NoiseDraw noise{{xi}};
  const std::vector<double> upstream{1.0};
  const auto grad = std::get<idfree::BetaGrad>(
      idfree::reparam_grad_params(dist, noise, upstream));
  const double h = 1e-4;
  const double fd_alpha = (idfree::inverse_reg_inc_beta(xi, a + h, b) -
                           idfree::inverse_reg_inc_beta(xi, a - h, b)) /
                          (2.0 * h);
  const double fd_beta = (idfree::inverse_reg_inc_beta(xi, a, b + h) -
                          idfree::inverse_reg_inc_beta(xi, a, b - h)) /
                         (2.0 * h);
  EXPECT_NEAR(grad.alpha[0], fd_alpha, 1e-4 * std::fabs(fd_alpha));
  EXPECT_NEAR(grad.beta[0], fd_beta, 1e-4 * std::fabs(fd_beta));
}

TEST(ReparamGrad, VanishingDensityThrowsOrSkips) {
  // An extreme U-shaped Beta has vanishing density at its median, where the
  // uniform noise draw 0.5 lands the reparameterized sample.
  const EmbeddingDistribution dist = BetaPerDim{{1e-14}, {1e-14}};
  const NoiseDraw noise{{0.5}};
  const std::vector<double> upstream{1.0};
  EXPECT_THROW(idfree::reparam_grad_params(dist, noise, upstream),
               idfree::NumericalError);
  std::size_t skipped = 0;
  const auto grad = std::get<idfree::BetaGrad>(
      idfree::reparam_grad_params(dist, noise, upstream, &skipped));
  EXPECT_EQ(skipped, 1u);
  EXPECT_DOUBLE_EQ(grad.alpha[0], 0.0);
  EXPECT_DOUBLE_EQ(grad.beta[0], 0.0);
}

// Sampling/CDF consistency: the empirical CDF of draws from each route
// stays within Kolmogorov-Smirnov distance 0.01 of the analytic marginal.
TEST(SamplingConsistency, KolmogorovSmirnovAgainstAnalyticCdf) {
  const int n = 100000;
  struct Case {
    EmbeddingDistribution dist;
    const char* name;
  };
  const Case cases[] = {
      {DiagGaussian{{0.3}, 0.5}, "gaussian"},
      {BetaPerDim{{2.5}, {1.7}}, "beta"},
      {BetaPerDim{{0.6}, {3.0}}, "beta-small-alpha"},
  };
  for (const auto& c : cases) {
    Rng rng(11);
    std::vector<double> direct(n);
    for (int i = 0; i < n; ++i) direct[i] = idfree::sample(c.dist, rng)[0];
    const auto cdf = [&c](double x) { return idfree::cdf_marginal(c.dist, 0, x); };
    EXPECT_LT(oracles::ks_distance(direct, cdf), 0.01) << c.name;

    std::vector<double> reparam(n);
    Rng noise_rng(12);
    for (int i = 0; i < n; ++i) {
      const NoiseDraw noise = idfree::draw_noise(c.dist, noise_rng);
      reparam[i] = idfree::reparam_sample(c.dist, noise)[0];
    }
    EXPECT_LT(oracles::ks_distance(reparam, cdf), 0.01)
        << c.name << " (reparameterized route)";
  }
}

// Pathwise gradients agree in expectation with the score-function estimator.
TEST(GradientUnbiasedness, PathwiseMatchesScoreFunctionEstimator) {
  const double a = 2.0;
  const double b = 3.0;
  const EmbeddingDistribution dist = BetaPerDim{{a}, {b}};
  const auto f = [](double u) { return (u - 0.3) * (u - 0.3); };
  const auto df = [](double u) { return 2.0 * (u - 0.3); };

  const int n = 30000;
  std::vector<double> pathwise(n);
  Rng rng_path(21);
  for (int i = 0; i < n; ++i) {
    const NoiseDraw noise = idfree::draw_noise(dist, rng_path);
    const double u = idfree::reparam_sample(dist, noise)[0];
    const std::vector<double> upstream{df(u)};
    const auto g = std::get<idfree::BetaGrad>(
        idfree::reparam_grad_params(dist, noise, upstream));
    pathwise[i] = g.alpha[0];
  }

  std::vector<double> score(n);
  Rng rng_score(22);
  const double psi_sum = oracles::digamma(a + b);
  for (int i = 0; i < n; ++i) {
    const double u = idfree::sample(dist, rng_score)[0];
    score[i] = f(u) * (std::log(u) - oracles::digamma(a) + psi_sum);
  }

  const auto mp = oracles::mean_stderr(pathwise);
  const auto ms = oracles::mean_stderr(score);
  const double combined =
      std::sqrt(mp.stderr_ * mp.stderr_ + ms.stderr_ * ms.stderr_);
  EXPECT_LT(std::fabs(mp.mean - ms.mean), 3.0 * combined)
      << "pathwise " << mp.mean << " +- " << mp.stderr_ << ", score "
      << ms.mean << " +- " << ms.stderr_;
  // The pathwise route should also be the lower-variance one.
  EXPECT_LT(mp.stderr_, ms.stderr_);
}

TEST(Serialization, RoundTripsBothFamilies) {
  const EmbeddingDistribution g = DiagGaussian{{0.25, -1.5}, 0.3};
  const EmbeddingDistribution b = BetaPerDim{{2.0, 0.7}, {1.1, 5.0}};
  for (const auto& dist : {g, b}) {
    const auto j = idfree::to_json(dist);
    const EmbeddingDistribution back = idfree::distribution_from_json(j);
    EXPECT_EQ(back.index(), dist.index());
    EXPECT_EQ(idfree::to_json(back), j);
  }
  EXPECT_EQ(idfree::to_json(g).at("kind"), "gaussian");
  EXPECT_EQ(idfree::to_json(b).at("kind"), "beta");
}

TEST(Serialization, RejectsUnknownKindAndBadShapes) {
  EXPECT_THROW(idfree::distribution_from_json({{"kind", "cauchy"}}),
               idfree::ConfigError);
  nlohmann::json j{{"kind", "beta"},
                   {"alpha", std::vector<double>{1.0, 2.0}},
                   {"beta", std::vector<double>{1.0}}};
  EXPECT_THROW(idfree::distribution_from_json(j), idfree::ShapeError);
}

TEST(Mixture, ValidationCatchesWeightAndShapeErrors) {
  idfree::MixtureRepresentation bad_weights;
  bad_weights.components.push_back({0.5, BetaPerDim{{2.0}, {2.0}}});
  bad_weights.components.push_back({0.4, BetaPerDim{{3.0}, {1.0}}});
  EXPECT_THROW(idfree::validate_mixture(bad_weights), idfree::DomainError);

  idfree::MixtureRepresentation bad_dims;
  bad_dims.components.push_back({0.5, BetaPerDim{{2.0}, {2.0}}});
  bad_dims.components.push_back({0.5, BetaPerDim{{3.0, 1.0}, {1.0, 1.0}}});
  EXPECT_THROW(idfree::validate_mixture(bad_dims), idfree::ShapeError);
}

TEST(Mixture, DensityAndMarginalCdfAreWeightedSums) {
  idfree::MixtureRepresentation mix;
  mix.components.push_back({0.25, BetaPerDim{{2.0}, {3.0}}});
  mix.components.push_back({0.75, BetaPerDim{{5.0}, {1.5}}});
  idfree::validate_mixture(mix);
  const std::vector<double> u{0.4};
  const double expected =
      0.25 * std::exp(idfree::log_pdf(mix.components[0].dist, u)) +
      0.75 * std::exp(idfree::log_pdf(mix.components[1].dist, u));
  EXPECT_NEAR(idfree::mixture_pdf(mix, u), expected, 1e-13);
  const double expected_cdf =
      0.25 * idfree::cdf_marginal(mix.components[0].dist, 0, 0.4) +
      0.75 * idfree::cdf_marginal(mix.components[1].dist, 0, 0.4);
  EXPECT_NEAR(idfree::mixture_cdf_marginal(mix, 0, 0.4), expected_cdf, 1e-13);
}

}  // namespace
