// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "idfree/errors.hpp"

namespace idfree {

/// CDF of the standard normal distribution.
inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// Log density of Beta(a, b) at x; caller guarantees x in (0, 1).
inline double beta_log_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         log_beta_fn(a, b);
}

namespace detail {

// Continued fraction for the incomplete beta, evaluated with the modified
// Lentz algorithm. Valid for x < (a+1)/(a+b+2); the caller handles the
// symmetry switch.
inline double inc_beta_cf(double x, double a, double b) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double coef = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + coef * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + coef / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    coef = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + coef * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + coef / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw ConvergenceError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b), the Beta(a, b) CDF at x.
/// Inputs outside [0, 1] clamp to the nearer support edge.
inline double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("beta shape parameters must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta_fn(a, b);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::inc_beta_cf(x, a, b) / a;
  }
  return 1.0 - front * detail::inc_beta_cf(1.0 - x, b, a) / b;
}

/// Inverse of reg_inc_beta in x: Newton iteration guarded by a maintained
/// bracket, falling back to bisection whenever a step leaves it.
inline double inverse_reg_inc_beta(double p, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("beta shape parameters must be positive");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("probability must lie in [0, 1]");
  }
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  constexpr int kMaxIter = 200;
  constexpr double kResidualTol = 1e-13;
  const double ln_b = log_beta_fn(a, b);
  double lo = 0.0;
  double hi = 1.0;
  double x = a / (a + b);
  for (int it = 0; it < kMaxIter; ++it) {
    const double f = reg_inc_beta(x, a, b) - p;
    if (std::fabs(f) <= kResidualTol) return x;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double pdf =
        std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - ln_b);
    double next = (pdf > 1e-300) ? x - f / pdf : x;
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    if (hi - lo <= std::numeric_limits<double>::epsilon() * hi) {
      // Bracket exhausted at machine precision: the root sits between two
      // adjacent representables, so return the endpoint with the smaller
      // residual.
      const double f_lo = reg_inc_beta(lo, a, b) - p;
      const double f_hi = reg_inc_beta(hi, a, b) - p;
      return std::fabs(f_lo) <= std::fabs(f_hi) ? lo : hi;
    }
    x = next;
  }
  throw ConvergenceError("inverse incomplete beta did not converge");
}

}  // namespace idfree
