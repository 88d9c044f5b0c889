// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace idfree {

// Input outside a distribution's support or a function's domain.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An iterative numeric routine exhausted its iteration cap.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation hit a numerically degenerate region (e.g. vanishing density).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched vector or matrix dimensions.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent or invalid configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace idfree
