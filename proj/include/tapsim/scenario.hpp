// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tapsim/channel.hpp"
#include "tapsim/engine.hpp"
#include "tapsim/predictor_pair.hpp"
#include "tapsim/trace_data.hpp"

namespace tapsim {

/// Schema violation in a scenario file. The message names the offending
/// field by its dotted path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { Synthetic, Trace };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  SyntheticSpec synthetic;
  // When set, episode i replays a trajectory generated with seed
  // synthetic.seed + episode_seed instead of the fixed one.
  bool vary_per_episode = false;
  // Synthetic source: extra trajectories (seeds offset from synthetic.seed)
  // used for normalization bounds and long-term pre-training.
  std::size_t training_traces = 4;

  std::filesystem::path trace_path;
  std::size_t signals_per_dof = 1;
  double sample_rate_hz = 1000.0;
  double train_fraction = 0.7;  // trace source: leading share used for training
};

struct ExperimentConfig {
  std::size_t episodes = 100;
  std::uint64_t base_seed = 1;
  double success_tolerance = 0.05;
  std::size_t dwell_slots = 3;
  std::vector<std::size_t> waypoints;
  std::size_t slot_budget = 100000;
};

struct TrainingConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::uint64_t init_seed = 7;
  TrainingSchedule schedule;
  AdamConfig adam;
  std::size_t buffer_capacity = 4096;
  std::filesystem::path weights;  // load instead of training when non-empty

  // Online bootstrap (mode_policy = online).
  std::size_t steps_per_slot = 4;
  std::size_t min_buffer = 64;
  std::size_t max_online_steps = 5000;
};

struct ScenarioConfig {
  DataConfig data;
  ChannelConfig channel;
  EngineConfig engine;
  std::vector<Strategy> strategies{Strategy::NonPredictive, Strategy::SinglePredictive, Strategy::Tap};
  ExperimentConfig experiment;
  TrainingConfig training;
};

ScenarioConfig parse_scenario(const nlohmann::json& document);
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const ScenarioConfig& config);

Strategy parse_strategy(const std::string& name);

}  // namespace tapsim
