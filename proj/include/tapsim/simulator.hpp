// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "tapsim/engine.hpp"
#include "tapsim/online.hpp"
#include "tapsim/scenario.hpp"

namespace tapsim {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Positions only: source P_s, actuated P_p / P_np and |P - P_s| per DoF.
struct SlotRecord {
  std::size_t slot = 0;
  Eigen::VectorXd source;
  Eigen::VectorXd actuated;
  Eigen::VectorXd ae;
  DecisionSource decision = DecisionSource::HoldLast;
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::NonPredictive;
  std::vector<SlotRecord> records;
  bool success = false;
  double average_ae = 0.0;
  EngineStats engine;
  // (arrival slot, packet id, on time) for every delivery the engine saw.
  std::vector<std::tuple<std::size_t, std::uint64_t, bool>> deliveries;
};

struct StrategySummary {
  Strategy strategy = Strategy::NonPredictive;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double success_probability = 0.0;
  double mean_ae = 0.0;
  double std_ae = 0.0;  // population standard deviation of episode averages
  std::vector<double> per_slot_mean_ae;
  std::vector<DecisionSource> per_slot_modal_source;
  std::size_t source_counts[4] = {0, 0, 0, 0};  // indexed by DecisionSource
};

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<StrategySummary> strategies;
  nlohmann::json config;

  const StrategySummary& summary(Strategy strategy) const;
};

/// A scenario with its data loaded, normalized, and its long-term predictor
/// trained or loaded. Immutable once built, so episodes can share it.
class PreparedScenario {
 public:
  static PreparedScenario prepare(const ScenarioConfig& config, std::ostream* log = nullptr);

  /// Builds from an already-normalized trajectory; `predictors` may be null
  /// when no strategy needs the long-term predictor.
  PreparedScenario(ScenarioConfig config, Eigen::MatrixXd trajectory, std::vector<std::size_t> position_columns,
                   std::shared_ptr<PredictorPair> predictors);

  const ScenarioConfig& config() const { return config_; }
  const std::vector<std::size_t>& position_columns() const { return position_columns_; }
  const NormalizationSpec& normalization() const { return normalization_; }
  const PredictorPair* predictors() const { return predictors_.get(); }
  std::shared_ptr<PredictorPair> shared_predictors() const { return predictors_; }
  const TrainingLog& training_log() const { return training_log_; }
  /// Online policy: the bootstrap session that trained the predictor, if one ran.
  const std::optional<OnlineSessionResult>& bootstrap() const { return bootstrap_; }

  /// Normalized trajectory (slots x dims) replayed in an episode.
  Eigen::MatrixXd trajectory(std::uint64_t episode_seed) const;

  /// Normalized rows used for normalization bounds and pre-training.
  const std::vector<Eigen::MatrixXd>& training_rows() const { return training_rows_; }

 private:
  PreparedScenario() = default;

  ScenarioConfig config_;
  Eigen::MatrixXd trajectory_;
  std::vector<std::size_t> position_columns_;
  NormalizationSpec normalization_;
  std::vector<Eigen::MatrixXd> training_rows_;
  std::shared_ptr<PredictorPair> predictors_;
  TrainingLog training_log_;
  std::optional<OnlineSessionResult> bootstrap_;
};

/// Online-session settings taken from a scenario's engine, channel and
/// training sections.
OnlineSessionConfig online_session_config(const ScenarioConfig& config);

/// Long-term training samples from every training trajectory.
std::vector<Sample> training_samples(const PreparedScenario& scenario);

EpisodeResult run_episode(const PreparedScenario& scenario, Strategy strategy, std::uint64_t seed);

/// Runs episodes with seeds base_seed + i for every configured strategy.
/// All strategies see the same channel randomness for a given seed. Episodes
/// run on up to TAPSIM_THREADS threads; the report does not depend on it.
ExperimentReport run_experiment(const PreparedScenario& scenario);

/// True iff each waypoint slot sits inside a run of at least `dwell`
/// consecutive slots whose position error (max over DoF) is within
/// `tolerance`. Waypoints must lie inside the recorded episode.
bool evaluate_success(std::span<const SlotRecord> records, std::span<const std::size_t> waypoints,
                      double tolerance, std::size_t dwell);

double average_ae(std::span<const SlotRecord> records);
double success_probability(std::span<const EpisodeResult> results);

/// Full report as JSON.
nlohmann::json report_to_json(const ExperimentReport& report);
/// Writes <dir>/report.json and <dir>/per_slot.csv
/// (columns: slot,strategy,source_tag,mean_AE; source_tag is the most common
/// decision at that slot across episodes).
void export_report(const ExperimentReport& report, const std::filesystem::path& directory);

/// One CSV row per slot and strategy for a single episode.
void export_episode_csv(std::span<const EpisodeResult> episodes, const std::filesystem::path& path);

/// Worker count from TAPSIM_THREADS, bounded by hardware concurrency.
std::size_t episode_threads();

}  // namespace tapsim
