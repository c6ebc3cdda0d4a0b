// SPDX-License-Identifier: Apache-2.0
#include "tapsim/online.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <thread>

namespace tapsim {

const ValidationRound* OnlineSessionResult::switch_round() const {
  if (!switch_step) return nullptr;
  for (const auto& round : rounds) {
    if (round.step == *switch_step) return &round;
  }
  return nullptr;
}

namespace {

// Shared between the slot loop and the trainer. In the deterministic mode
// everything runs on one thread and the mutex is uncontended.
struct TrainerState {
  std::mutex mutex;
  std::condition_variable wake;
  TrainingBuffer buffer;
  std::vector<ValidationRound> pending;  // rounds not yet shown to the engine
  std::size_t steps = 0;
  std::size_t promotions = 0;
  bool stop = false;

  explicit TrainerState(std::size_t capacity) : buffer(capacity) {}
};

ValidationRound validation_round(PredictorPair& pair, const std::vector<Sample>& validation,
                                 const EngineConfig& engine, std::size_t step) {
  ValidationRound round;
  round.step = step;
  const auto scores = pair.evaluate(validation);
  round.promoted = pair.maybe_promote(scores);
  round.long_term_ae = round.promoted ? scores.evaluation_ae : scores.generation_ae;
  round.short_term_ae = evaluate_ar_avg_ae(validation, engine.ar_order, engine.ar_ridge);
  return round;
}

}  // namespace

OnlineSessionResult run_online_session(const Eigen::MatrixXd& trajectory, const OnlineSessionConfig& config) {
  if (trajectory.rows() < 1) throw EngineError("online session needs a non-empty trajectory");
  if (config.batch_size == 0 || config.eval_every == 0 || config.steps_per_slot == 0) {
    throw EngineError("batch_size, eval_every and steps_per_slot must be positive");
  }
  auto engine_config = config.engine;
  engine_config.mode_policy = ModePolicy::Online;
  const std::size_t lookback = engine_config.lookback;
  const std::size_t horizon = engine_config.horizon;
  const GruShape shape{config.layers, static_cast<std::size_t>(trajectory.cols()), config.hidden};

  OnlineSessionResult result;
  result.predictors = std::make_shared<PredictorPair>(init_gru(config.init_seed, shape), config.adam);
  PredictorPair& pair = *result.predictors;
  SupportEngine engine(engine_config, Strategy::Tap, trajectory.row(0).transpose(), &pair);
  result.initial_mode = engine.mode();

  TrainerState state(config.buffer_capacity);
  std::mt19937_64 rng(config.seed);
  const std::size_t min_buffer = std::max<std::size_t>(config.min_buffer, 2);

  // Runs `count` updates; caller holds no lock in concurrent mode.
  auto train = [&](std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<Sample> batch;
      std::vector<Sample> validation;
      std::size_t step = 0;
      {
        std::unique_lock lock(state.mutex);
        if (state.stop || state.steps >= config.max_steps || state.buffer.size() < min_buffer) return false;
        batch = state.buffer.sample_batch(rng, config.batch_size);
        step = ++state.steps;
        if (step % config.eval_every == 0 || step == config.max_steps) validation = state.buffer.validation();
      }
      pair.train_step(batch);
      if (!validation.empty()) {
        auto round = validation_round(pair, validation, engine_config, step);
        std::lock_guard lock(state.mutex);
        if (round.promoted) ++state.promotions;
        state.pending.push_back(round);
      }
    }
    return true;
  };

  std::jthread trainer;
  if (config.concurrent) {
    trainer = std::jthread([&] {
      while (true) {
        {
          std::unique_lock lock(state.mutex);
          state.wake.wait(lock, [&] {
            return state.stop || (state.steps < config.max_steps && state.buffer.size() >= min_buffer);
          });
          if (state.stop) return;
        }
        train(1);
      }
    });
  }

  auto show_rounds = [&](std::size_t slot) {
    std::lock_guard lock(state.mutex);
    for (auto& round : state.pending) {
      round.slot = slot;
      const auto before = engine.mode();
      round.mode = engine.maybe_switch_mode(round.short_term_ae, round.long_term_ae);
      if (before != round.mode && !result.switch_step) {
        result.switch_step = round.step;
        result.switch_slot = slot;
      }
      result.rounds.push_back(round);
    }
    state.pending.clear();
  };

  const auto length = static_cast<std::size_t>(trajectory.rows());
  auto channel_config = config.channel;
  Channel channel(channel_config);
  const std::size_t deadline = channel_config.deadline_slots;
  const std::size_t mu =
      engine_config.bundling ? compute_mu(engine_config.sample_rate_hz, engine_config.transmit_rate_hz) : 1;
  auto command = [&](std::size_t slot) {
    return CommandMatrix{slot, trajectory.row(static_cast<Eigen::Index>(slot)).transpose()};
  };

  std::map<std::size_t, std::vector<DeliveryEvent>> pending;
  std::uint64_t next_id = 0;
  for (std::size_t clock = 0; clock < length + deadline; ++clock) {
    if (clock < length && clock % mu == 0) {
      Packet packet{next_id++, clock, {}};
      if (mu == 1 || clock == 0) {
        packet.payload.push_back(command(clock));
      } else {
        std::vector<CommandMatrix> recent;
        for (std::size_t s = clock + 1 - mu; s <= clock; ++s) recent.push_back(command(s));
        packet.payload = bundle(recent, mu);
      }
      channel.transmit(std::move(packet), clock);
    }
    for (auto& event : channel.advance_slot(clock)) {
      const std::size_t target = event.on_time ? event.payload.back().slot : clock - deadline;
      pending[target].push_back(std::move(event));
    }
    if (clock < deadline) continue;

    const std::size_t slot = clock - deadline;
    if (auto it = pending.find(slot); it != pending.end()) {
      std::stable_partition(it->second.begin(), it->second.end(), [](const DeliveryEvent& e) { return !e.on_time; });
      for (const auto& event : it->second) engine.ingest_delivery(event.payload, event.on_time, slot);
      pending.erase(it);
    }
    show_rounds(slot);
    result.decisions.push_back(engine.decide_actuation(slot).source);

    // A fresh sample whenever the newest slot is known and a full
    // window plus label fits behind it.
    if (slot >= lookback + horizon && engine.history().count(slot) != 0) {
      const auto rows = engine.window_ending_at(slot, lookback + horizon + 1);
      Sample sample{rows.topRows(static_cast<Eigen::Index>(lookback + 1)),
                    rows.bottomRows(static_cast<Eigen::Index>(horizon))};
      {
        std::lock_guard lock(state.mutex);
        state.buffer.push(std::move(sample));
      }
      if (config.concurrent) state.wake.notify_one();
    }
    if (!config.concurrent) train(config.steps_per_slot);
  }

  if (config.concurrent) {
    {
      std::lock_guard lock(state.mutex);
      state.stop = true;
    }
    state.wake.notify_all();
    trainer.join();
  }
  show_rounds(length - 1);

  result.final_mode = engine.mode();
  result.training_steps = state.steps;
  result.promotions = state.promotions;
  return result;
}

}  // namespace tapsim
