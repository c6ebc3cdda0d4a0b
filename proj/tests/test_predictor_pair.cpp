// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "tapsim/predictor_pair.hpp"
#include "test_support.hpp"

using namespace tapsim;
using tapsim::testing::TempDir;

namespace {

std::vector<Sample> constant_samples(std::size_t count, double level) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({tapsim::testing::uniform_matrix(4, 2, i), Eigen::MatrixXd::Constant(2, 2, level)});
  }
  return out;
}

}  // namespace

TEST_CASE("Adam first step moves each weight by the learning rate") {
  AdamOptimizer adam(3, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
  Eigen::VectorXd params = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd gradient(3);
  gradient << 2.0, -0.5, 0.0;
  adam.step(params, gradient);
  CHECK(params(0) == doctest::Approx(-0.01));
  CHECK(params(1) == doctest::Approx(0.01));
  CHECK(params(2) == 0.0);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("Adam clips the global gradient norm") {
  AdamOptimizer adam(2, AdamConfig{0.01, 0.9, 0.999, 1e-8, 1.0});
  Eigen::VectorXd params = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd gradient(2);
  gradient << 30.0, 40.0;
  adam.step(params, gradient);
  CHECK(adam.first_moment()(0) == doctest::Approx(0.1 * 0.6));
  CHECK(adam.first_moment()(1) == doctest::Approx(0.1 * 0.8));
}

TEST_CASE("training buffer evicts the oldest sample and holds out the newest") {
  TrainingBuffer buffer(10, 0.1);
  for (int i = 0; i < 15; ++i) buffer.push({Eigen::MatrixXd::Constant(2, 1, i), Eigen::MatrixXd::Zero(1, 1)});
  CHECK(buffer.size() == 10);
  CHECK(buffer.validation_size() == 1);
  CHECK(buffer.training_size() == 9);
  CHECK(buffer.validation().front().window(0, 0) == 14.0);
  std::mt19937_64 rng(1);
  for (const auto& s : buffer.sample_batch(rng, 50)) {
    CHECK(s.window(0, 0) >= 5.0);
    CHECK(s.window(0, 0) <= 13.0);
  }
  CHECK_THROWS_AS(buffer.push({Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(1, 1)}), PredictorError);
  CHECK_THROWS_AS(TrainingBuffer(0), PredictorError);
  CHECK_THROWS_AS(TrainingBuffer(1).sample_batch(rng, 1), PredictorError);
}

TEST_CASE("promotion happens only on strict improvement") {
  PredictorPair pair(init_gru(1, {1, 2, 3}));
  const auto before = pair.generation();
  CHECK_FALSE(pair.maybe_promote({0.3, 0.3}));
  CHECK(pair.generation() == before);
  CHECK_FALSE(pair.maybe_promote({0.3, 0.4}));
  CHECK(pair.maybe_promote({0.3, 0.2}));
  CHECK(pair.generation() != before);
  CHECK(pair.generation()->params() == pair.evaluation().params());
}

TEST_CASE("training touches only the evaluation network") {
  PredictorPair pair(init_gru(2, {1, 2, 3}));
  const auto snapshot = pair.generation()->params();
  const auto samples = constant_samples(4, 0.2);
  for (int i = 0; i < 5; ++i) pair.train_step(samples);
  CHECK(pair.generation()->params() == snapshot);
  CHECK(pair.evaluation().params() != snapshot);
  const auto scores = pair.evaluate(samples);
  CHECK(scores.evaluation_ae < scores.generation_ae);
}

TEST_CASE("non-finite loss is reported") {
  PredictorPair pair(init_gru(2, {1, 2, 3}));
  auto samples = constant_samples(2, 0.2);
  samples[0].label(0, 0) = NAN;
  CHECK_THROWS_AS(pair.train_step(samples), PredictorError);
}

TEST_CASE("pretrain improves validation error") {
  PredictorPair pair(init_gru(3, {1, 2, 4}), AdamConfig{0.01});
  const auto samples = constant_samples(64, 0.7);
  const double initial = evaluate_avg_ae(*pair.generation(), samples);
  const auto log = pretrain(pair, samples, TrainingSchedule{300, 16, 50, 1});
  CHECK(log.steps == 300);
  CHECK(log.promotions >= 1);
  CHECK(log.final_validation_ae < initial);
  CHECK_THROWS_AS(pretrain(pair, std::vector<Sample>{}, TrainingSchedule{}), PredictorError);
}

TEST_CASE("generation snapshots stay readable while training promotes") {
  PredictorPair pair(init_gru(4, {1, 2, 4}), AdamConfig{0.01});
  const auto samples = constant_samples(8, 0.4);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> reads{0};
  std::atomic<bool> finite{true};
  std::thread reader([&] {
    while (!done) {
      const auto net = pair.generation();
      const auto out = gru_forward(*net, samples[0].window, 2);
      if (!out.allFinite()) finite = false;
      ++reads;
    }
  });
  for (int i = 0; i < 200; ++i) {
    pair.train_step(samples);
    pair.maybe_promote(pair.evaluate(samples));
  }
  done = true;
  reader.join();
  CHECK(finite);
  CHECK(reads > 0);
}

TEST_CASE("weights round trip bit for bit") {
  TempDir dir;
  const auto net = init_gru(8, {2, 3, 5});
  save_weights(net, 16, 5, dir / "w.bin");
  const auto loaded = load_weights(dir / "w.bin", WeightShape{{2, 3, 5}, 16, 5});
  CHECK(loaded.network.params() == net.params());
  CHECK(loaded.shape.lookback == 16);
  const auto bytes = tapsim::testing::read_file(dir / "w.bin");
  CHECK(bytes.substr(0, 4) == "TAPW");
  CHECK(bytes.size() == 4 + 6 * 4 + net.parameter_count() * 8);
}

TEST_CASE("weight file errors") {
  TempDir dir;
  save_weights(init_gru(1, {2, 4, 8}), 16, 5, dir / "w.bin");
  SUBCASE("shape mismatch names both shapes") {
    try {
      load_weights(dir / "w.bin", WeightShape{{2, 4, 16}, 16, 5});
      FAIL("expected WeightFileError");
    } catch (const WeightFileError& e) {
      const std::string message = e.what();
      CHECK(message.find("H=8") != std::string::npos);
      CHECK(message.find("H=16") != std::string::npos);
    }
  }
  SUBCASE("bad magic") {
    auto bytes = tapsim::testing::read_file(dir / "w.bin");
    bytes[0] = 'X';
    tapsim::testing::write_file(dir / "bad.bin", bytes);
    CHECK_THROWS_AS(load_weights(dir / "bad.bin"), WeightFileError);
  }
  SUBCASE("truncated") {
    const auto bytes = tapsim::testing::read_file(dir / "w.bin");
    tapsim::testing::write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_weights(dir / "short.bin"), WeightFileError);
  }
  SUBCASE("missing") { CHECK_THROWS_AS(load_weights(dir / "none.bin"), WeightFileError); }
}
