// SPDX-License-Identifier: Apache-2.0
#include "tapsim/verify/ar_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "tapsim/ar_model.hpp"

namespace tapsim::verify {

Eigen::VectorXd gaussian_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw std::runtime_error("oracle: singular system");
    if (pivot != col) {
      a.row(pivot).swap(a.row(col));
      std::swap(b(pivot), b(col));
    }
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (Eigen::Index k = col; k < n; ++k) a(r, k) -= f * a(col, k);
      b(r) -= f * b(col);
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double acc = b(r);
    for (Eigen::Index k = r + 1; k < n; ++k) acc -= a(r, k) * x(k);
    x(r) = acc / a(r, r);
  }
  return x;
}

Eigen::MatrixXd oracle_ar_fit(const Eigen::MatrixXd& window, std::size_t order, double ridge) {
  const auto n = static_cast<std::size_t>(window.rows());
  const auto p = order;
  Eigen::MatrixXd out(window.cols(), static_cast<Eigen::Index>(p + 1));
  for (Eigen::Index d = 0; d < window.cols(); ++d) {
    // Regressor k: 0 is the constant, k >= 1 is lag k.
    auto regressor = [&](std::size_t t, std::size_t k) {
      return k == 0 ? 1.0 : window(static_cast<Eigen::Index>(t - k), d);
    };
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p + 1), static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
    for (std::size_t t = p; t < n; ++t) {
      for (std::size_t i = 0; i <= p; ++i) {
        b(static_cast<Eigen::Index>(i)) += regressor(t, i) * window(static_cast<Eigen::Index>(t), d);
        for (std::size_t j = 0; j <= p; ++j) {
          a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += regressor(t, i) * regressor(t, j);
        }
      }
    }
    for (std::size_t i = 1; i <= p; ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += ridge;
    out.row(d) = gaussian_solve(a, b).transpose();
  }
  return out;
}

namespace {

double max_difference(const ArModel& model, const Eigen::MatrixXd& reference) {
  double worst = 0.0;
  for (Eigen::Index d = 0; d < reference.rows(); ++d) {
    worst = std::max(worst, std::abs(model.intercepts(d) - reference(d, 0)));
    for (Eigen::Index j = 0; j < model.coefficients.cols(); ++j) {
      worst = std::max(worst, std::abs(model.coefficients(d, j) - reference(d, j + 1)));
    }
  }
  return worst;
}

}  // namespace

Report run_ar_oracle_suite(const ArOracleOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Report report;

  Check random_windows{"random windows vs normal-equations oracle", 0.0, options.coefficient_tolerance, false};
  for (std::size_t w = 0; w < options.windows; ++w) {
    Eigen::MatrixXd window(static_cast<Eigen::Index>(options.length), static_cast<Eigen::Index>(options.dims));
    for (Eigen::Index i = 0; i < window.size(); ++i) window.data()[i] = unit(rng);
    const auto model = fit_ar(window, options.order, options.ridge);
    random_windows.max_error =
        std::max(random_windows.max_error, max_difference(model, oracle_ar_fit(window, options.order, options.ridge)));
  }
  random_windows.passed = random_windows.max_error <= random_windows.tolerance;
  report.checks.push_back(random_windows);

  // x[t] = c + a1 x[t-1] + a2 x[t-2] with complex roots of modulus r keeps
  // oscillating for the whole window, so every coefficient is identifiable.
  Check recovery{"noiseless AR(2) recovery", 0.0, options.recovery_tolerance, false};
  for (std::size_t w = 0; w < options.windows; ++w) {
    Eigen::MatrixXd window(static_cast<Eigen::Index>(options.length), static_cast<Eigen::Index>(options.dims));
    Eigen::MatrixXd truth(static_cast<Eigen::Index>(options.dims), 3);
    for (Eigen::Index d = 0; d < window.cols(); ++d) {
      const double r = 0.9 + 0.09 * unit(rng);
      const double theta = 0.3 + 0.9 * unit(rng);
      const double a1 = 2.0 * r * std::cos(theta);
      const double a2 = -r * r;
      const double c = 0.5 * (1.0 - a1 - a2);
      truth.row(d) << c, a1, a2;
      window(0, d) = unit(rng);
      window(1, d) = unit(rng);
      for (Eigen::Index t = 2; t < window.rows(); ++t) {
        window(t, d) = c + a1 * window(t - 1, d) + a2 * window(t - 2, d);
      }
    }
    const auto model = fit_ar(window, 2, 0.0);
    recovery.max_error = std::max(recovery.max_error, max_difference(model, truth));
    const auto next = predict_ar(model, window.bottomRows(2), 1);
    for (Eigen::Index d = 0; d < window.cols(); ++d) {
      const double expected = std::clamp(truth(d, 0) + truth(d, 1) * window(window.rows() - 1, d) +
                                             truth(d, 2) * window(window.rows() - 2, d),
                                         0.0, 1.0);
      recovery.max_error = std::max(recovery.max_error, std::abs(next(0, d) - expected));
    }
  }
  recovery.passed = recovery.max_error <= recovery.tolerance;
  report.checks.push_back(recovery);

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace tapsim::verify
