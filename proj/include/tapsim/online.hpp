// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tapsim/channel.hpp"
#include "tapsim/engine.hpp"
#include "tapsim/predictor_pair.hpp"

namespace tapsim {

/// Online bootstrap: the engine starts in single-prediction mode while the
/// long-term predictor trains on windows cut from the engine's own history.
struct OnlineSessionConfig {
  EngineConfig engine;
  ChannelConfig channel;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::uint64_t init_seed = 7;
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 4096;
  std::size_t steps_per_slot = 4;
  std::size_t eval_every = 100;   // training steps between validation rounds
  std::size_t min_buffer = 64;    // samples collected before training starts
  std::size_t max_steps = 5000;   // training stops here
  std::uint64_t seed = 0;         // batch sampling
  // Train on a background thread instead of k steps per slot. Results then
  // depend on scheduling and are not reproducible.
  bool concurrent = false;
};

struct ValidationRound {
  std::size_t step = 0;  // training steps completed
  std::size_t slot = 0;
  double short_term_ae = 0.0;
  double long_term_ae = 0.0;  // generation network, after promotion
  bool promoted = false;
  EngineMode mode = EngineMode::SinglePrediction;
};

struct OnlineSessionResult {
  EngineMode initial_mode = EngineMode::SinglePrediction;
  EngineMode final_mode = EngineMode::SinglePrediction;
  std::optional<std::size_t> switch_step;
  std::optional<std::size_t> switch_slot;
  std::size_t training_steps = 0;
  std::size_t promotions = 0;
  std::vector<ValidationRound> rounds;
  std::vector<DecisionSource> decisions;  // one per slot
  std::shared_ptr<PredictorPair> predictors;

  /// Round that triggered the switch, if any.
  const ValidationRound* switch_round() const;
};

/// Replays a normalized trajectory through the channel into a TAP engine
/// with the online mode policy, training the long-term predictor as it goes.
/// Stops early once TAP is active and training has hit max_steps.
OnlineSessionResult run_online_session(const Eigen::MatrixXd& trajectory, const OnlineSessionConfig& config);

}  // namespace tapsim
