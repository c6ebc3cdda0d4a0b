// SPDX-License-Identifier: Apache-2.0
#include "tapsim/ar_model.hpp"

#include <algorithm>
#include <string>

namespace tapsim {

ArModel fit_ar(const Eigen::Ref<const Eigen::MatrixXd>& window, std::size_t order, double ridge) {
  const auto n = static_cast<std::size_t>(window.rows());
  if (order == 0) throw PredictorError("AR order must be positive");
  if (n < order + 2) {
    throw PredictorError("AR(" + std::to_string(order) + ") needs a window of at least " +
                         std::to_string(order + 2) + " vectors, got " + std::to_string(n));
  }
  if (!(ridge >= 0.0)) throw PredictorError("ridge must be non-negative");
  if (!window.allFinite()) throw PredictorError("AR window contains non-finite values");

  const auto p = static_cast<Eigen::Index>(order);
  const auto rows = static_cast<Eigen::Index>(n) - p;
  const auto dims = window.cols();

  ArModel model;
  model.order = order;
  model.ridge = ridge;
  model.coefficients.resize(dims, p);
  model.intercepts.resize(dims);

  Eigen::MatrixXd design(rows, p + 1);
  Eigen::VectorXd target(rows);
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Identity(p + 1, p + 1) * ridge;
  penalty(0, 0) = 0.0;

  for (Eigen::Index d = 0; d < dims; ++d) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index t = r + p;
      design(r, 0) = 1.0;
      for (Eigen::Index j = 1; j <= p; ++j) design(r, j) = window(t - j, d);
      target(r) = window(t, d);
    }
    const Eigen::MatrixXd normal = design.transpose() * design + penalty;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
    if (!lu.isInvertible()) {
      throw PredictorError("singular AR normal equations in dimension " + std::to_string(d) +
                           " (ridge " + std::to_string(ridge) + "); retry with a positive ridge");
    }
    const Eigen::VectorXd solution = lu.solve(design.transpose() * target);
    if (!solution.allFinite()) throw PredictorError("AR fit produced non-finite coefficients");
    model.intercepts(d) = solution(0);
    model.coefficients.row(d) = solution.tail(p).transpose();
  }
  model.window_length = n;
  return model;
}

Eigen::MatrixXd predict_ar(const ArModel& model, const Eigen::Ref<const Eigen::MatrixXd>& recent,
                           std::size_t steps) {
  if (!model.fitted()) throw PredictorError("AR model is not fitted");
  if (static_cast<std::size_t>(recent.rows()) != model.order ||
      static_cast<std::size_t>(recent.cols()) != model.dims()) {
    throw PredictorError("AR prediction expects " + std::to_string(model.order) + "x" +
                         std::to_string(model.dims()) + " recent values, got " +
                         std::to_string(recent.rows()) + "x" + std::to_string(recent.cols()));
  }
  if (steps == 0) throw PredictorError("AR prediction needs at least one step");

  const auto p = static_cast<Eigen::Index>(model.order);
  // lags.row(0) is the newest value.
  Eigen::MatrixXd lags = recent.colwise().reverse();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(steps), recent.cols());
  for (Eigen::Index k = 0; k < out.rows(); ++k) {
    for (Eigen::Index d = 0; d < recent.cols(); ++d) {
      const double raw = model.intercepts(d) + model.coefficients.row(d).dot(lags.col(d));
      out(k, d) = std::clamp(raw, 0.0, 1.0);
    }
    for (Eigen::Index j = p - 1; j > 0; --j) lags.row(j) = lags.row(j - 1);
    lags.row(0) = out.row(k);
  }
  return out;
}

}  // namespace tapsim
