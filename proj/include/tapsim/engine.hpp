// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tapsim/ar_model.hpp"
#include "tapsim/predictor_pair.hpp"
#include "tapsim/trace_data.hpp"

namespace tapsim {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Strategy { NonPredictive, SinglePredictive, Tap };
enum class EngineMode { SinglePrediction, Tap };
enum class ModePolicy { Offline, Online };
enum class DecisionSource { Actual, ShortTerm, LongTerm, HoldLast };

std::string_view to_string(Strategy strategy);
std::string_view to_string(EngineMode mode);
std::string_view to_string(DecisionSource source);

struct EngineConfig {
  std::size_t lookback = 16;  // history vectors before the newest one in a window
  std::size_t horizon = 5;    // slots covered by one prediction block
  double sample_rate_hz = 100.0;
  double transmit_rate_hz = 100.0;
  bool bundling = false;
  ModePolicy mode_policy = ModePolicy::Offline;
  std::size_t ar_order = 3;
  double ar_ridge = 1e-6;
  std::size_t history_capacity = 256;

  void validate() const;
};

/// Commands per packet when bundling: ceil(f_s / f_t).
std::size_t compute_mu(double sample_rate_hz, double transmit_rate_hz);

/// Packs exactly `mu` consecutive commands, oldest first. On receipt the last
/// element is the actuation candidate and the rest only feed the history.
std::vector<CommandMatrix> bundle(std::span<const CommandMatrix> commands, std::size_t mu);

struct ActuationDecision {
  std::size_t slot = 0;
  Eigen::VectorXd command;
  DecisionSource source = DecisionSource::HoldLast;
  std::size_t slots_since_receipt = 0;
};

struct EngineStats {
  std::size_t stored = 0;              // distinct slots ever written to history
  std::size_t duplicates_ignored = 0;
  std::size_t cold_start_holds = 0;    // holds caused by missing receipts or history
  std::size_t ar_failures = 0;
  std::size_t long_term_runs = 0;
};

/// Support engine for one receiving domain. Per slot the caller feeds every
/// delivery through ingest_delivery() and then calls decide_actuation() once.
///
/// The long-term predictor is read through PredictorPair::generation(), so a
/// concurrent trainer may promote weights at any time.
class SupportEngine {
 public:
  SupportEngine(EngineConfig config, Strategy strategy, Eigen::VectorXd initial_command,
                const PredictorPair* long_term = nullptr);

  void ingest_delivery(std::span<const CommandMatrix> payload, bool on_time, std::size_t now);
  ActuationDecision decide_actuation(std::size_t now);

  /// Online policy only: upgrades to TAP once the long-term validation AE is
  /// strictly below the short-term one. Never downgrades.
  EngineMode maybe_switch_mode(double short_val_ae, double long_val_ae);

  EngineMode mode() const { return mode_; }
  Strategy strategy() const { return strategy_; }
  const EngineConfig& config() const { return config_; }
  const EngineStats& stats() const { return stats_; }
  const std::map<std::size_t, Eigen::VectorXd>& history() const { return history_; }
  std::optional<std::size_t> last_receipt_slot() const { return receipt_slot_; }
  bool has_cached_block() const { return long_block_.has_value(); }

  /// `rows` consecutive slots ending at `end_slot`, oldest first. Slots
  /// missing from history are linearly interpolated between the nearest
  /// stored neighbours, or copied from the single nearest one at the edges.
  Eigen::MatrixXd window_ending_at(std::size_t end_slot, std::size_t rows) const;

 private:
  void refresh_predictions(std::size_t slot);
  std::size_t stored_between(std::size_t first, std::size_t last) const;

  EngineConfig config_;
  Strategy strategy_;
  EngineMode mode_;
  const PredictorPair* long_term_;
  std::size_t dims_;

  std::map<std::size_t, Eigen::VectorXd> history_;
  std::optional<std::size_t> receipt_slot_;
  Eigen::VectorXd candidate_;
  Eigen::VectorXd last_actuated_;
  std::optional<Eigen::MatrixXd> short_block_;
  std::optional<Eigen::MatrixXd> long_block_;
  std::optional<std::size_t> decided_slot_;
  EngineStats stats_;
};

}  // namespace tapsim
