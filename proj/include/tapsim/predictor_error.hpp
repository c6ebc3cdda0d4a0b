// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace tapsim {

/// Misuse or numerical failure inside either predictor.
class PredictorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tapsim
