// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "tapsim/predictor_error.hpp"

namespace tapsim {

/// Per-dimension autoregression with intercept:
///   x_d[t] = c_d + sum_j a_{d,j} x_d[t-j]
/// Cross-dimension terms are deliberately absent.
struct ArModel {
  std::size_t order = 0;
  double ridge = 0.0;
  std::size_t window_length = 0;  // 0 while unfitted
  Eigen::MatrixXd coefficients;   // dims x order, column j-1 holds lag j
  Eigen::VectorXd intercepts;

  bool fitted() const { return window_length > 0; }
  std::size_t dims() const { return static_cast<std::size_t>(intercepts.size()); }
};

/// Fits each column of `window` (rows are successive slots, oldest first) by
/// ridge-regularized least squares. The ridge term penalizes the lag
/// coefficients only, never the intercept.
ArModel fit_ar(const Eigen::Ref<const Eigen::MatrixXd>& window, std::size_t order, double ridge);

/// Recursive multi-step forecast from the last `order` rows in `recent`.
/// Every step is clamped to [0, 1] before being fed back.
Eigen::MatrixXd predict_ar(const ArModel& model, const Eigen::Ref<const Eigen::MatrixXd>& recent,
                           std::size_t steps);

/// Mean absolute error of fit-on-window then recursive `horizon`-step
/// forecasting, over a set of (window, label) pairs.
template <typename SampleRange>
double evaluate_ar_avg_ae(const SampleRange& samples, std::size_t order, double ridge) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& sample : samples) {
    const auto& w = sample.window;
    const auto model = fit_ar(w, order, ridge);
    const auto forecast = predict_ar(model, w.bottomRows(static_cast<Eigen::Index>(order)),
                                     static_cast<std::size_t>(sample.label.rows()));
    total += (forecast - sample.label).cwiseAbs().sum();
    count += static_cast<std::size_t>(sample.label.size());
  }
  if (count == 0) throw PredictorError("AR evaluation needs at least one sample");
  return total / static_cast<double>(count);
}

}  // namespace tapsim
