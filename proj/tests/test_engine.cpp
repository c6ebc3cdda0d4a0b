// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tapsim/engine.hpp"
#include "test_support.hpp"

using namespace tapsim;

namespace {

EngineConfig small_config() {
  EngineConfig c;
  c.lookback = 6;
  c.horizon = 5;
  c.ar_order = 3;
  return c;
}

CommandMatrix cmd(std::size_t slot, double value, std::size_t dims = 2) {
  return CommandMatrix{slot, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dims), value)};
}

double smooth(std::size_t slot) { return 0.5 + 0.3 * std::sin(0.2 * static_cast<double>(slot)); }

// Feeds slots [0, last] on time, one per slot, deciding each.
void feed(SupportEngine& engine, std::size_t last) {
  for (std::size_t t = 0; t <= last; ++t) {
    const auto c = cmd(t, smooth(t));
    engine.ingest_delivery(std::span<const CommandMatrix>(&c, 1), true, t);
    CHECK(engine.decide_actuation(t).source == DecisionSource::Actual);
  }
}

}  // namespace

TEST_CASE("compute_mu rounds up") {
  CHECK(compute_mu(1000.0, 166.67) == 6);
  CHECK(compute_mu(1000.0, 200.0) == 5);
  CHECK(compute_mu(100.0, 100.0) == 1);
  CHECK_THROWS_AS(compute_mu(100.0, 0.0), EngineError);
}

TEST_CASE("bundle validates count and succession") {
  std::vector<CommandMatrix> five{cmd(1, 0), cmd(2, 0), cmd(3, 0), cmd(4, 0), cmd(5, 0)};
  CHECK(bundle(five, 5).back().slot == 5);
  CHECK_THROWS_AS(bundle(five, 6), EngineError);
  five[2].slot = 9;
  CHECK_THROWS_AS(bundle(five, 5), EngineError);
}

TEST_CASE("engine configuration is validated") {
  auto c = small_config();
  c.lookback = 4;  // below ar_order + 2
  CHECK_THROWS_AS(SupportEngine(c, Strategy::SinglePredictive, Eigen::VectorXd::Zero(2)), EngineError);
  c = small_config();
  c.horizon = 0;
  CHECK_THROWS_AS(SupportEngine(c, Strategy::SinglePredictive, Eigen::VectorXd::Zero(2)), EngineError);
  c = small_config();
  c.transmit_rate_hz = 200.0;
  CHECK_THROWS_AS(SupportEngine(c, Strategy::SinglePredictive, Eigen::VectorXd::Zero(2)), EngineError);
  CHECK_THROWS_AS(SupportEngine(small_config(), Strategy::Tap, Eigen::VectorXd::Zero(2)), EngineError);
  PredictorPair wrong(init_gru(1, {1, 3, 2}));
  CHECK_THROWS_AS(SupportEngine(small_config(), Strategy::Tap, Eigen::VectorXd::Zero(2), &wrong), EngineError);
}

TEST_CASE("cold start holds the initial command") {
  SupportEngine engine(small_config(), Strategy::SinglePredictive, Eigen::VectorXd::Constant(2, 0.25));
  const auto d = engine.decide_actuation(0);
  CHECK(d.source == DecisionSource::HoldLast);
  CHECK(d.command(0) == 0.25);
  CHECK(engine.stats().cold_start_holds == 1);
}

TEST_CASE("TAP routes actual, short-term, long-term, then hold") {
  PredictorPair pair(init_gru(5, {1, 2, 4}));
  SupportEngine engine(small_config(), Strategy::Tap, Eigen::VectorXd::Constant(2, 0.5), &pair);
  CHECK(engine.mode() == EngineMode::Tap);
  feed(engine, 9);
  const auto block = gru_forward(*pair.generation(), engine.window_ending_at(9, 7), 5);

  const auto s1 = engine.decide_actuation(10);
  CHECK(s1.source == DecisionSource::ShortTerm);
  CHECK(s1.slots_since_receipt == 1);
  for (std::size_t s = 2; s <= 5; ++s) {
    const auto d = engine.decide_actuation(9 + s);
    CHECK(d.source == DecisionSource::LongTerm);
    CHECK((d.command - block.row(static_cast<Eigen::Index>(s) - 1).transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  const auto held = engine.decide_actuation(15);
  CHECK(held.source == DecisionSource::HoldLast);
  CHECK(held.command == block.row(4).transpose());
  CHECK(engine.decide_actuation(40).source == DecisionSource::HoldLast);
}

TEST_CASE("short-term block matches an AR fit on the window") {
  SupportEngine engine(small_config(), Strategy::SinglePredictive, Eigen::VectorXd::Constant(2, 0.5));
  feed(engine, 9);
  const auto window = engine.window_ending_at(9, 7);
  const auto expected = predict_ar(fit_ar(window, 3, 1e-6), window.bottomRows(3), 5);
  for (std::size_t s = 1; s <= 5; ++s) {
    const auto d = engine.decide_actuation(9 + s);
    CHECK(d.source == DecisionSource::ShortTerm);
    CHECK(d.command == expected.row(static_cast<Eigen::Index>(s) - 1).transpose());
  }
  CHECK(engine.decide_actuation(15).source == DecisionSource::HoldLast);
}

TEST_CASE("non-predictive holds the last actuated command") {
  SupportEngine engine(small_config(), Strategy::NonPredictive, Eigen::VectorXd::Constant(2, 0.5));
  feed(engine, 9);
  for (std::size_t t = 10; t < 14; ++t) {
    const auto d = engine.decide_actuation(t);
    CHECK(d.source == DecisionSource::HoldLast);
    CHECK(d.command(0) == smooth(9));
  }
}

TEST_CASE("late deliveries fill history without being actuated") {
  SupportEngine engine(small_config(), Strategy::SinglePredictive, Eigen::VectorXd::Constant(2, 0.5));
  feed(engine, 9);
  engine.decide_actuation(10);
  const auto late = cmd(10, 0.9);
  engine.ingest_delivery(std::span<const CommandMatrix>(&late, 1), false, 11);
  const auto d = engine.decide_actuation(11);
  CHECK(d.source == DecisionSource::ShortTerm);
  CHECK(d.slots_since_receipt == 2);
  CHECK(engine.history().at(10)(0) == 0.9);
}

TEST_CASE("a fresh receipt discards the cached prediction blocks") {
  PredictorPair pair(init_gru(5, {1, 2, 4}));
  SupportEngine engine(small_config(), Strategy::Tap, Eigen::VectorXd::Constant(2, 0.5), &pair);
  feed(engine, 9);
  engine.decide_actuation(10);
  engine.decide_actuation(11);
  const auto fresh = cmd(12, 0.8);
  engine.ingest_delivery(std::span<const CommandMatrix>(&fresh, 1), true, 12);
  CHECK(engine.decide_actuation(12).source == DecisionSource::Actual);
  const auto next = engine.decide_actuation(13);
  CHECK(next.source == DecisionSource::ShortTerm);
  CHECK(next.slots_since_receipt == 1);
  const auto block = gru_forward(*pair.generation(), engine.window_ending_at(12, 7), 5);
  CHECK(engine.decide_actuation(14).command == block.row(1).transpose());
}

TEST_CASE("bundled deliveries store every command and actuate the last") {
  auto config = small_config();
  config.sample_rate_hz = 500.0;
  config.transmit_rate_hz = 100.0;
  config.bundling = true;
  SupportEngine engine(config, Strategy::SinglePredictive, Eigen::VectorXd::Constant(2, 0.5));
  std::vector<CommandMatrix> commands;
  for (std::size_t s = 5; s <= 9; ++s) commands.push_back(cmd(s, 0.1 * static_cast<double>(s - 4)));
  const auto payload = bundle(commands, 5);
  engine.ingest_delivery(payload, true, 9);
  const auto d = engine.decide_actuation(9);
  CHECK(d.source == DecisionSource::Actual);
  CHECK(d.command(0) == doctest::Approx(0.5));
  CHECK(engine.history().size() == 5);
  CHECK(engine.stats().stored == 5);
  engine.ingest_delivery(std::span<const CommandMatrix>(payload.data() + 4, 1), false, 10);
  CHECK(engine.stats().duplicates_ignored == 1);
}

TEST_CASE("online policy switches once and never reverts") {
  PredictorPair pair(init_gru(5, {1, 2, 4}));
  auto config = small_config();
  config.mode_policy = ModePolicy::Online;
  SupportEngine engine(config, Strategy::Tap, Eigen::VectorXd::Constant(2, 0.5), &pair);
  CHECK(engine.mode() == EngineMode::SinglePrediction);
  CHECK(engine.maybe_switch_mode(0.1, 0.2) == EngineMode::SinglePrediction);
  CHECK(engine.maybe_switch_mode(0.1, 0.1) == EngineMode::SinglePrediction);
  CHECK(engine.maybe_switch_mode(0.2, 0.1) == EngineMode::Tap);
  CHECK(engine.maybe_switch_mode(0.1, 0.9) == EngineMode::Tap);

  feed(engine, 9);
  CHECK(engine.decide_actuation(11).source == DecisionSource::LongTerm);
}

TEST_CASE("single-prediction mode runs AR out to the horizon") {
  PredictorPair pair(init_gru(5, {1, 2, 4}));
  auto config = small_config();
  config.mode_policy = ModePolicy::Online;
  SupportEngine engine(config, Strategy::Tap, Eigen::VectorXd::Constant(2, 0.5), &pair);
  feed(engine, 9);
  for (std::size_t t = 10; t <= 14; ++t) CHECK(engine.decide_actuation(t).source == DecisionSource::ShortTerm);
  CHECK(engine.stats().long_term_runs == 0);
}

TEST_CASE("offline policy ignores switch requests for other strategies") {
  SupportEngine engine(small_config(), Strategy::SinglePredictive, Eigen::VectorXd::Zero(1));
  CHECK(engine.maybe_switch_mode(1.0, 0.0) == EngineMode::SinglePrediction);
}

TEST_CASE("window_ending_at interpolates gaps and copies edges") {
  SupportEngine engine(small_config(), Strategy::NonPredictive, Eigen::VectorXd::Zero(1));
  const std::vector<CommandMatrix> sparse{cmd(2, 0.0, 1), cmd(6, 0.4, 1)};
  engine.ingest_delivery(sparse, true, 6);
  const auto w = engine.window_ending_at(8, 9);
  const double expected[9] = {0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.4, 0.4};
  for (int i = 0; i < 9; ++i) CHECK(w(i, 0) == doctest::Approx(expected[i]));
}

TEST_CASE("engine call order is enforced") {
  SupportEngine engine(small_config(), Strategy::NonPredictive, Eigen::VectorXd::Zero(2));
  engine.decide_actuation(3);
  CHECK_THROWS_AS(engine.decide_actuation(3), EngineError);
  const auto c = cmd(3, 0.1);
  CHECK_THROWS_AS(engine.ingest_delivery(std::span<const CommandMatrix>(&c, 1), true, 3), EngineError);
  const auto wide = cmd(4, 0.1, 3);
  CHECK_THROWS_AS(engine.ingest_delivery(std::span<const CommandMatrix>(&wide, 1), true, 4), EngineError);
  CHECK_THROWS_AS(engine.ingest_delivery({}, true, 4), EngineError);
}

TEST_CASE("history is bounded by its capacity") {
  auto config = small_config();
  config.history_capacity = 10;
  SupportEngine engine(config, Strategy::NonPredictive, Eigen::VectorXd::Zero(2));
  feed(engine, 30);
  CHECK(engine.history().size() == 10);
  CHECK(engine.history().begin()->first == 21);
}
