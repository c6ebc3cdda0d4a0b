// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "tapsim/verify/checks.hpp"

namespace tapsim::verify {

/// Reference AR fit that shares no code with fit_ar: normal equations built
/// with explicit sums and solved by Gaussian elimination with partial
/// pivoting. Row d holds [c_d, a_{d,1}, ..., a_{d,p}].
Eigen::MatrixXd oracle_ar_fit(const Eigen::MatrixXd& window, std::size_t order, double ridge);

/// Solves A x = b in place by partial-pivot elimination. Throws on a zero pivot.
Eigen::VectorXd gaussian_solve(Eigen::MatrixXd a, Eigen::VectorXd b);

struct ArOracleOptions {
  std::size_t windows = 50;
  std::size_t dims = 5;
  std::size_t order = 3;
  std::size_t length = 50;
  double ridge = 1e-6;
  double coefficient_tolerance = 1e-9;
  double recovery_tolerance = 1e-8;
  std::uint64_t seed = 20240601;
};

/// Random windows against the oracle, then exact recovery of noiseless AR(2)
/// series.
Report run_ar_oracle_suite(const ArOracleOptions& options = {});

}  // namespace tapsim::verify
