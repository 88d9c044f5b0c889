// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#include "idfree/attack.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "idfree/identifiability.hpp"
#include "oracles.hpp"

namespace {

using idfree::BetaPerDim;
using idfree::DiagGaussian;
using idfree::EmbeddingDistribution;
using idfree::MixtureRepresentation;
using idfree::Rng;

TEST(PosteriorArgmax, PicksTheComponentCenteredOnTheSample) {
  const std::vector<EmbeddingDistribution> dists{
      DiagGaussian{{0.0, 0.0}, 0.2}, DiagGaussian{{1.0, -1.0}, 0.2}};
  const std::vector<double> prior{0.5, 0.5};
  EXPECT_EQ(idfree::posterior_argmax(dists, prior,
                                     std::vector<double>{1.0, -1.0}),
            1u);
  EXPECT_EQ(idfree::posterior_argmax(dists, prior,
                                     std::vector<double>{0.0, 0.0}),
            0u);
}

TEST(PosteriorArgmax, IdenticalComponentsTieBreakTowardIndexZero) {
  const std::vector<EmbeddingDistribution> dists{
      DiagGaussian{{0.3}, 0.2}, DiagGaussian{{0.3}, 0.2},
      DiagGaussian{{0.3}, 0.2}};
  const std::vector<double> prior{1.0 / 3, 1.0 / 3, 1.0 / 3};
  Rng rng(80);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> u{0.3 + 0.2 * rng.normal()};
    EXPECT_EQ(idfree::posterior_argmax(dists, prior, u), 0u);
  }
}

TEST(PosteriorArgmax, EqualSigmaUniformPriorIsExactlyNearestMean) {
  Rng rng(81);
  std::vector<EmbeddingDistribution> dists;
  std::vector<std::vector<double>> means;
  for (int k = 0; k < 6; ++k) {
    std::vector<double> mean(4);
    for (double& v : mean) v = rng.normal();
    means.push_back(mean);
    dists.push_back(DiagGaussian{mean, 0.3});
  }
  const std::vector<double> prior(6, 1.0 / 6);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> u(4);
    for (double& v : u) v = 2.0 * rng.normal();
    std::size_t nearest = 0;
    for (std::size_t k = 1; k < means.size(); ++k) {
      if (idfree::l2_distance(means[k], u) <
          idfree::l2_distance(means[nearest], u)) {
        nearest = k;
      }
    }
    EXPECT_EQ(idfree::posterior_argmax(dists, prior, u), nearest);
  }
}

TEST(PosteriorArgmax, NonUniformPriorShiftsTheDecision) {
  const std::vector<EmbeddingDistribution> dists{DiagGaussian{{0.0}, 1.0},
                                                 DiagGaussian{{1.0}, 1.0}};
  // At the midpoint the likelihoods tie; a lopsided prior decides.
  const std::vector<double> heavy_right{0.1, 0.9};
  EXPECT_EQ(idfree::posterior_argmax(dists, heavy_right,
                                     std::vector<double>{0.5}),
            1u);
  const std::vector<double> heavy_left{0.9, 0.1};
  EXPECT_EQ(idfree::posterior_argmax(dists, heavy_left,
                                     std::vector<double>{0.5}),
            0u);
}

TEST(PosteriorArgmax, RejectsBadPriorsAndUnsupportedPoints) {
  const std::vector<EmbeddingDistribution> dists{BetaPerDim{{2.0}, {2.0}},
                                                 BetaPerDim{{3.0}, {1.0}}};
  EXPECT_THROW(idfree::posterior_argmax(dists, std::vector<double>{0.7, 0.7},
                                        std::vector<double>{0.5}),
               idfree::ConfigError);
  const std::vector<double> prior{0.5, 0.5};
  EXPECT_THROW(
      idfree::posterior_argmax(dists, prior, std::vector<double>{1.5}),
      idfree::DomainError);
}

TEST(Misattribution, TwoIdenticalGaussiansGiveExactlyHalf) {
  const std::vector<EmbeddingDistribution> dists{DiagGaussian{{0.1, 0.2}, 0.3},
                                                 DiagGaussian{{0.1, 0.2}, 0.3}};
  const std::vector<double> prior{0.5, 0.5};
  Rng rng(82);
  const auto report = idfree::misattribution_mc(dists, prior, 500, rng);
  EXPECT_DOUBLE_EQ(report.per_user_rates[0], 0.0);
  EXPECT_DOUBLE_EQ(report.per_user_rates[1], 1.0);
  EXPECT_DOUBLE_EQ(report.empirical_misattribution, 0.5);
}

TEST(Misattribution, WellSeparatedMeansAreAlmostNeverConfused) {
  // Means 10 sigma apart: the confusion chance per pair is about Phi(-5).
  const std::vector<EmbeddingDistribution> dists{DiagGaussian{{0.0}, 0.2},
                                                 DiagGaussian{{2.0}, 0.2}};
  const std::vector<double> prior{0.5, 0.5};
  Rng rng(83);
  const auto report = idfree::misattribution_mc(dists, prior, 10000, rng);
  EXPECT_LT(report.empirical_misattribution, 0.001);
}

TEST(Misattribution, StaticEmbeddingsAreAlwaysAttributedCorrectly) {
  std::vector<EmbeddingDistribution> dists;
  for (int k = 0; k < 5; ++k) {
    dists.push_back(DiagGaussian{{0.1 * k, -0.2 * k}, 0.0});
  }
  const std::vector<double> prior(5, 0.2);
  Rng rng(84);
  const auto report = idfree::misattribution_mc(dists, prior, 200, rng);
  EXPECT_DOUBLE_EQ(report.empirical_misattribution, 0.0);
}

TEST(MisattributionBound, ClosedFormValues) {
  // Zero training displacement: 1 - 0.5^(N-1).
  EXPECT_NEAR(idfree::misattribution_lower_bound(0.0, 100, 5.0, 0.2, 2), 0.5,
              1e-12);
  EXPECT_NEAR(idfree::misattribution_lower_bound(0.0, 100, 5.0, 0.2, 4), 0.875,
              1e-12);
  // A single user can never be misattributed.
  EXPECT_DOUBLE_EQ(idfree::misattribution_lower_bound(1e-3, 100, 5.0, 0.2, 1),
                   0.0);
  // Frozen from the Phi oracle: 1 - Phi(2.5)^49.
  const double bound =
      idfree::misattribution_lower_bound(1e-3, 100, 5.0, 0.2, 50);
  EXPECT_NEAR(bound, 0.263040432195, 1e-9);
  const double oracle =
      1.0 - std::pow(oracles::std_normal_cdf_oracle(2.5), 49);
  EXPECT_NEAR(bound, oracle, 1e-12);
  EXPECT_THROW(idfree::misattribution_lower_bound(1e-3, 100, 5.0, 0.0, 50),
               idfree::DomainError);
}

TEST(CloserToOwnMean, ClosedFormAndLimits) {
  EXPECT_DOUBLE_EQ(idfree::closer_to_own_mean_prob(0.0, 0.2), 0.5);
  EXPECT_NEAR(idfree::closer_to_own_mean_prob(0.1, 0.2), 0.598706325683, 1e-9);
  EXPECT_NEAR(idfree::closer_to_own_mean_prob(1e9, 0.2), 1.0, 1e-15);
}

TEST(CloserToOwnMean, MonteCarloAgreesAcrossDimensions) {
  Rng rng(85);
  for (int d : {1, 8}) {
    const double distance = 0.1;
    const double sigma = 0.2;
    std::vector<double> own(d, 0.0);
    std::vector<double> other(d, 0.0);
    other[0] = distance;
    const int draws = 100000;
    int closer = 0;
    std::vector<double> u(d);
    for (int i = 0; i < draws; ++i) {
      for (int j = 0; j < d; ++j) u[j] = sigma * rng.normal();
      if (idfree::l2_distance(u, own) <= idfree::l2_distance(u, other)) {
        ++closer;
      }
    }
    EXPECT_NEAR(static_cast<double>(closer) / draws,
                idfree::closer_to_own_mean_prob(distance, sigma), 0.01)
        << "d = " << d;
  }
}

TEST(PairwiseGap, PassesAtZeroAndExactlyAtTheBound) {
  const std::vector<EmbeddingDistribution> same{DiagGaussian{{0.0, 0.0}, 0.2},
                                                DiagGaussian{{0.0, 0.0}, 0.2}};
  const auto zero_report = idfree::pairwise_gap_check(same, 1e-3, 100, 5.0);
  EXPECT_DOUBLE_EQ(zero_report.max_gap, 0.0);
  EXPECT_TRUE(zero_report.pass);

  const double bound = 2.0 * 1e-3 * 100 * 5.0;  // = 1.0
  const std::vector<EmbeddingDistribution> at_bound{
      DiagGaussian{{0.0, 0.0}, 0.2}, DiagGaussian{{bound, 0.0}, 0.2}};
  const auto boundary = idfree::pairwise_gap_check(at_bound, 1e-3, 100, 5.0);
  EXPECT_NEAR(boundary.max_gap, bound, 1e-12);
  EXPECT_TRUE(boundary.pass);

  const std::vector<EmbeddingDistribution> beyond{
      DiagGaussian{{0.0, 0.0}, 0.2}, DiagGaussian{{bound + 1e-6, 0.0}, 0.2}};
  EXPECT_FALSE(idfree::pairwise_gap_check(beyond, 1e-3, 100, 5.0).pass);

  const std::vector<EmbeddingDistribution> beta{BetaPerDim{{2.0}, {2.0}}};
  EXPECT_THROW(idfree::pairwise_gap_check(beta, 1e-3, 100, 5.0),
               idfree::ConfigError);
}

MixtureRepresentation three_user_mixture() {
  MixtureRepresentation mix;
  mix.components.push_back({0.5, BetaPerDim{{2.0, 3.0}, {3.0, 2.0}}});
  mix.components.push_back({0.3, BetaPerDim{{1.5, 1.0}, {2.5, 4.0}}});
  mix.components.push_back({0.2, BetaPerDim{{4.0, 2.0}, {1.0, 5.0}}});
  return mix;
}

TEST(SplitBetaComponent, SplitCoefficientsFollowTheShapeRatio) {
  const MixtureRepresentation mix = three_user_mixture();
  // Component 0, dimension 0 has alpha 2, beta 3: coefficients 0.4 and 0.6.
  const MixtureRepresentation out = idfree::split_beta_component(mix, 0, 0);
  ASSERT_EQ(out.components.size(), 4u);
  EXPECT_NEAR(out.components[0].weight, 0.5 * 0.4, 1e-12);
  EXPECT_NEAR(out.components[1].weight, 0.5 * 0.6, 1e-12);
  const auto& up = std::get<BetaPerDim>(out.components[0].dist);
  const auto& down = std::get<BetaPerDim>(out.components[1].dist);
  EXPECT_DOUBLE_EQ(up.alpha[0], 3.0);
  EXPECT_DOUBLE_EQ(up.beta[0], 3.0);
  EXPECT_DOUBLE_EQ(down.alpha[0], 2.0);
  EXPECT_DOUBLE_EQ(down.beta[0], 4.0);
}

TEST(SplitBetaComponent, SymmetricShapesSplitEvenly) {
  MixtureRepresentation mix;
  mix.components.push_back({1.0, BetaPerDim{{2.5}, {2.5}}});
  const MixtureRepresentation out = idfree::split_beta_component(mix, 0, 0);
  EXPECT_NEAR(out.components[0].weight, 0.5, 1e-12);
  EXPECT_NEAR(out.components[1].weight, 0.5, 1e-12);
}

TEST(SplitBetaComponent, PreservesWeightMassAndPerDimensionMoments) {
  const MixtureRepresentation mix = three_user_mixture();
  const MixtureRepresentation out = idfree::split_beta_component(mix, 1, 1);

  double weight_sum = 0.0;
  for (const auto& c : out.components) weight_sum += c.weight;
  EXPECT_NEAR(weight_sum, 1.0, 1e-12);

  const auto moments = [](const MixtureRepresentation& m, std::size_t d) {
    double mean = 0.0;
    double second = 0.0;
    for (const auto& c : m.components) {
      const auto& b = std::get<BetaPerDim>(c.dist);
      const double a = b.alpha[d];
      const double bb = b.beta[d];
      const double mu = a / (a + bb);
      const double var = a * bb / ((a + bb) * (a + bb) * (a + bb + 1.0));
      mean += c.weight * mu;
      second += c.weight * (var + mu * mu);
    }
    return std::pair<double, double>{mean, second};
  };
  for (std::size_t d = 0; d < 2; ++d) {
    const auto [m1, s1] = moments(mix, d);
    const auto [m2, s2] = moments(out, d);
    EXPECT_NEAR(m1, m2, 1e-9);
    EXPECT_NEAR(s1, s2, 1e-9);
  }
}

TEST(SplitBetaComponent, RejectsGaussianComponentsAndBadIndices) {
  MixtureRepresentation mix;
  mix.components.push_back({1.0, DiagGaussian{{0.0}, 0.2}});
  EXPECT_THROW(idfree::split_beta_component(mix, 0, 0), idfree::ConfigError);
  const MixtureRepresentation betas = three_user_mixture();
  EXPECT_THROW(idfree::split_beta_component(betas, 5, 0), idfree::ConfigError);
  EXPECT_THROW(idfree::split_beta_component(betas, 0, 9), idfree::ConfigError);
}

TEST(VerifyNonidentifiability, DecompositionIsADensityEquivalentWitness) {
  const MixtureRepresentation mix = three_user_mixture();
  const MixtureRepresentation alt = idfree::split_beta_component(mix, 0, 1);
  const auto report = idfree::verify_nonidentifiability(mix, alt, 80, 1e-9);
  EXPECT_TRUE(report.distinct_representation);
  EXPECT_LT(report.max_pdf_diff, 1e-9);
  EXPECT_LT(report.max_cdf_diff, 1e-9);
  EXPECT_TRUE(report.pass);
}

TEST(VerifyNonidentifiability, IdenticalRepresentationIsNotAWitness) {
  const MixtureRepresentation mix = three_user_mixture();
  const auto report = idfree::verify_nonidentifiability(mix, mix, 40, 1e-9);
  EXPECT_DOUBLE_EQ(report.max_pdf_diff, 0.0);
  EXPECT_FALSE(report.distinct_representation);
  EXPECT_FALSE(report.pass);
}

TEST(VerifyNonidentifiability, WeightPerturbationIsDetected) {
  const MixtureRepresentation mix = three_user_mixture();
  MixtureRepresentation perturbed = mix;
  perturbed.components[0].weight += 1e-3;
  perturbed.components[2].weight -= 1e-3;
  const auto report =
      idfree::verify_nonidentifiability(mix, perturbed, 60, 1e-9);
  EXPECT_GT(report.max_pdf_diff, 1e-9);
  EXPECT_FALSE(report.pass);
}

TEST(VerifyNonidentifiability, RepeatedSplitsStayEquivalent) {
  const MixtureRepresentation mix = three_user_mixture();
  MixtureRepresentation current = mix;
  for (int step = 0; step < 5; ++step) {
    current = idfree::split_beta_component(
        current, static_cast<std::size_t>(step) % current.components.size(),
        static_cast<std::size_t>(step) % 2);
    const auto report = idfree::verify_nonidentifiability(mix, current, 50, 1e-9);
    EXPECT_TRUE(report.pass) << "after split " << step + 1;
  }
}

}  // namespace
