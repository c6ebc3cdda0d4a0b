// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tapsim/gru.hpp"
#include "tapsim/predictor_pair.hpp"
#include "tapsim/verify/gradcheck.hpp"
#include "test_support.hpp"

using namespace tapsim;

TEST_CASE("parameter count") {
  CHECK(GruNetwork::parameter_count({2, 4, 8}) == 756);
  CHECK(GruNetwork({2, 4, 8}).parameter_count() == 756);
  CHECK(GruNetwork::parameter_count({1, 1, 1}) == 3 * 3 + 2);
}

TEST_CASE("parameter views follow the documented layout") {
  GruNetwork net({2, 2, 3});
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) = static_cast<double>(i);
  CHECK(net.input_weights(0, Gate::Reset)(0, 0) == 0.0);
  CHECK(net.input_weights(0, Gate::Update)(0, 0) == 6.0);
  CHECK(net.recurrent_weights(0, Gate::Reset)(0, 0) == 18.0);
  CHECK(net.bias(0, Gate::Reset)(0) == 45.0);
  CHECK(net.input_weights(1, Gate::Reset)(0, 1) == 55.0);
  CHECK(net.output_weights()(1, 0) == static_cast<double>(net.output_weights_offset() + 3));
  CHECK(net.output_bias()(1) == static_cast<double>(net.parameter_count() - 1));
}

TEST_CASE("zero weights predict one half everywhere") {
  GruNetwork net({2, 3, 4});
  net.params().setZero();
  const auto out = gru_forward(net, tapsim::testing::uniform_matrix(6, 3, 1), 4);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 3);
  CHECK((out.array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches the independent reference") {
  GruNetwork net({2, 2, 3});
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) = 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  Eigen::MatrixXd window(3, 2);
  window << 0.1, 0.9, 0.4, 0.6, 0.7, 0.2;
  const double expected[3][2] = {{0.33042032157764967, 0.3446656689759072},
                                 {0.32778628825318595, 0.337005520330374},
                                 {0.327355884197035, 0.3325181832830368}};
  const auto out = gru_forward(net, window, 3);
  for (int k = 0; k < 3; ++k) {
    for (int d = 0; d < 2; ++d) CHECK(std::abs(out(k, d) - expected[k][d]) < 1e-12);
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  const auto net = init_gru(3, {2, 3, 5});
  std::vector<Sample> batch;
  for (std::uint64_t s = 0; s < 4; ++s) batch.push_back({tapsim::testing::uniform_matrix(5, 3, s), Eigen::MatrixXd::Zero(2, 3)});
  const auto outs = gru_forward_batch(net, batch);
  REQUIRE(outs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK((outs[i] - gru_forward(net, batch[i].window, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("outputs always lie strictly inside the unit interval") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto net = init_gru(seed, {2, 2, 4});
    net.params() *= 5.0;
    const auto out = gru_forward(net, tapsim::testing::uniform_matrix(8, 2, seed), 5);
    CHECK(out.minCoeff() > 0.0);
    CHECK(out.maxCoeff() < 1.0);
  }
}

TEST_CASE("initialisation is seeded and bounded") {
  const GruShape shape{2, 3, 4};
  const auto a = init_gru(5, shape);
  CHECK(a.params() == init_gru(5, shape).params());
  CHECK(a.params() != init_gru(6, shape).params());
  CHECK(a.input_weights(0, Gate::Reset).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(a.recurrent_weights(1, Gate::Candidate).cwiseAbs().maxCoeff() <= 0.5);
}

TEST_CASE("loss is zero when labels equal the outputs") {
  const auto net = init_gru(9, {1, 2, 3});
  Sample s{tapsim::testing::uniform_matrix(4, 2, 2), {}};
  s.label = gru_forward(net, s.window, 2);
  Eigen::VectorXd gradient;
  CHECK(gru_loss(net, std::span<const Sample>(&s, 1), &gradient) < 1e-28);
  CHECK(gradient.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("loss is the mean squared error") {
  GruNetwork net({1, 2, 2});
  net.params().setZero();  // every output is 0.5
  Sample s{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Constant(2, 2, 0.1)};
  CHECK(gru_loss(net, std::span<const Sample>(&s, 1)) == doctest::Approx(0.16));
}

TEST_CASE("gradient matches central differences") {
  for (const auto& c : verify::default_gradcheck_cases()) {
    const auto check = verify::gradcheck_case(c);
    INFO(check.name << " max relative error " << check.max_error);
    CHECK(check.passed);
    CHECK(check.max_error < 1e-4);
  }
}

TEST_CASE("relative error formula") {
  CHECK(verify::relative_error(1.0, 1.0) == 0.0);
  CHECK(verify::relative_error(1.0, 0.5) == doctest::Approx(0.5));
  CHECK(verify::relative_error(0.0, 0.0) == 0.0);
  CHECK(verify::relative_error(1e-12, 0.0) == doctest::Approx(1e-4));
}

TEST_CASE("evaluate_avg_ae of a constant predictor") {
  GruNetwork net({1, 1, 2});
  net.params().setZero();
  net.output_bias()(0) = std::log(1.5);  // sigmoid gives 0.6
  std::vector<Sample> validation{{Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Constant(3, 1, 0.4)},
                                 {Eigen::MatrixXd::Ones(4, 1), Eigen::MatrixXd::Constant(3, 1, 0.4)}};
  CHECK(evaluate_avg_ae(net, validation) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("training learns a constant task") {
  const GruShape shape{1, 2, 4};
  PredictorPair pair(init_gru(1, shape), AdamConfig{});
  std::vector<Sample> batch;
  for (std::uint64_t s = 0; s < 8; ++s) {
    batch.push_back({tapsim::testing::uniform_matrix(4, 2, s), Eigen::MatrixXd::Constant(2, 2, 0.3)});
  }
  double loss = 0.0;
  for (int step = 0; step < 2000; ++step) loss = pair.train_step(batch);
  CHECK(loss < 1e-3);
}

TEST_CASE("make_samples cuts consecutive windows") {
  Eigen::MatrixXd rows(10, 1);
  for (int t = 0; t < 10; ++t) rows(t, 0) = t;
  const auto samples = make_samples(rows, 3, 2);
  REQUIRE(samples.size() == 5);
  CHECK(samples[0].window(0, 0) == 0.0);
  CHECK(samples[0].window(3, 0) == 3.0);
  CHECK(samples[0].label(0, 0) == 4.0);
  CHECK(samples[4].label(1, 0) == 9.0);
  CHECK(make_samples(rows, 3, 2, 2).size() == 3);
  CHECK(make_samples(rows, 8, 2).empty());
}

TEST_CASE("shape errors") {
  const auto net = init_gru(1, {1, 2, 3});
  CHECK_THROWS_AS(gru_forward(net, Eigen::MatrixXd::Zero(4, 3), 2), PredictorError);
  CHECK_THROWS_AS(gru_forward(net, Eigen::MatrixXd::Zero(4, 2), 0), PredictorError);
}
