// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tapsim/gru.hpp"
#include "tapsim/verify/checks.hpp"

namespace tapsim::verify {

struct GradcheckCase {
  GruShape shape;
  std::size_t lookback = 3;
  std::size_t horizon = 2;
  std::size_t batch = 2;
  std::uint64_t seed = 1;
};

/// |a - n| / max(|a|, |n|, floor); the floor keeps gradients that are zero
/// up to round-off from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Largest relative error over every parameter, comparing gru_loss's
/// gradient with central differences of a loss computed from gru_forward.
Check gradcheck_case(const GradcheckCase& c, double step = 1e-5, double tolerance = 1e-4);

/// Tiny shapes with L in {1, 2}, H <= 4, D <= 2.
std::vector<GradcheckCase> default_gradcheck_cases();

Report run_gradcheck_suite(double step = 1e-5, double tolerance = 1e-4);

}  // namespace tapsim::verify
