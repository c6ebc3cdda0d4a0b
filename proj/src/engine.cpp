// SPDX-License-Identifier: Apache-2.0
#include "tapsim/engine.hpp"

#include <cmath>
#include <string>

namespace tapsim {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::NonPredictive: return "non_predictive";
    case Strategy::SinglePredictive: return "single_predictive";
    case Strategy::Tap: return "tap";
  }
  return "?";
}

std::string_view to_string(EngineMode mode) {
  return mode == EngineMode::Tap ? "tap" : "single_prediction";
}

std::string_view to_string(DecisionSource source) {
  switch (source) {
    case DecisionSource::Actual: return "actual";
    case DecisionSource::ShortTerm: return "short_term";
    case DecisionSource::LongTerm: return "long_term";
    case DecisionSource::HoldLast: return "hold_last";
  }
  return "?";
}

void EngineConfig::validate() const {
  if (horizon < 1) throw EngineError("horizon must be >= 1");
  if (ar_order < 1) throw EngineError("ar_order must be >= 1");
  if (lookback < std::max<std::size_t>(ar_order + 2, 2)) {
    throw EngineError("lookback " + std::to_string(lookback) + " must be >= max(ar_order + 2, 2) = " +
                      std::to_string(std::max<std::size_t>(ar_order + 2, 2)));
  }
  if (!(transmit_rate_hz > 0.0) || !(sample_rate_hz >= transmit_rate_hz)) {
    throw EngineError("rates must satisfy sample_rate_hz >= transmit_rate_hz > 0");
  }
  if (!(ar_ridge >= 0.0)) throw EngineError("ar_ridge must be non-negative");
  if (history_capacity < lookback + 1) throw EngineError("history_capacity must hold at least lookback + 1 vectors");
}

std::size_t compute_mu(double sample_rate_hz, double transmit_rate_hz) {
  if (!(sample_rate_hz > 0.0) || !(transmit_rate_hz > 0.0)) {
    throw EngineError("sampling and transmission rates must be positive");
  }
  return static_cast<std::size_t>(std::max(1.0, std::ceil(sample_rate_hz / transmit_rate_hz)));
}

std::vector<CommandMatrix> bundle(std::span<const CommandMatrix> commands, std::size_t mu) {
  if (commands.size() != mu) {
    throw EngineError("bundle expects " + std::to_string(mu) + " commands, got " + std::to_string(commands.size()));
  }
  for (std::size_t i = 1; i < commands.size(); ++i) {
    if (commands[i].slot != commands[i - 1].slot + 1) {
      throw EngineError("bundled commands must be successive: slot " + std::to_string(commands[i].slot) +
                        " follows " + std::to_string(commands[i - 1].slot));
    }
  }
  return {commands.begin(), commands.end()};
}

SupportEngine::SupportEngine(EngineConfig config, Strategy strategy, Eigen::VectorXd initial_command,
                             const PredictorPair* long_term)
    : config_(config),
      strategy_(strategy),
      mode_(strategy == Strategy::Tap && config.mode_policy == ModePolicy::Offline ? EngineMode::Tap
                                                                                   : EngineMode::SinglePrediction),
      long_term_(long_term),
      dims_(static_cast<std::size_t>(initial_command.size())),
      last_actuated_(std::move(initial_command)) {
  config_.validate();
  if (dims_ == 0) throw EngineError("initial command must not be empty");
  if (strategy_ == Strategy::Tap) {
    if (!long_term_) throw EngineError("TAP strategy needs a long-term predictor");
    if (long_term_->evaluation().shape().input_dim != dims_) {
      throw EngineError("long-term predictor width " + std::to_string(long_term_->evaluation().shape().input_dim) +
                        " does not match command width " + std::to_string(dims_));
    }
  }
}

void SupportEngine::ingest_delivery(std::span<const CommandMatrix> payload, bool on_time, std::size_t now) {
  if (payload.empty()) throw EngineError("delivery payload is empty");
  if (decided_slot_ && now <= *decided_slot_) {
    throw EngineError("delivery for slot " + std::to_string(now) + " after slot " + std::to_string(*decided_slot_) +
                      " was already actuated");
  }
  for (const auto& command : payload) {
    if (static_cast<std::size_t>(command.values.size()) != dims_) {
      throw EngineError("command width " + std::to_string(command.values.size()) + " differs from engine width " +
                        std::to_string(dims_));
    }
    if (!history_.emplace(command.slot, command.values).second) {
      ++stats_.duplicates_ignored;
      continue;
    }
    ++stats_.stored;
  }
  while (history_.size() > config_.history_capacity) history_.erase(history_.begin());

  if (!on_time) return;
  receipt_slot_ = now;
  candidate_ = payload.back().values;
  short_block_.reset();
  long_block_.reset();
  if (strategy_ != Strategy::NonPredictive) refresh_predictions(payload.back().slot);
}

std::size_t SupportEngine::stored_between(std::size_t first, std::size_t last) const {
  return static_cast<std::size_t>(std::distance(history_.lower_bound(first), history_.upper_bound(last)));
}

void SupportEngine::refresh_predictions(std::size_t slot) {
  const std::size_t rows = config_.lookback + 1;
  const Eigen::MatrixXd window = window_ending_at(slot, rows);
  const std::size_t first = slot + 1 >= rows ? slot + 1 - rows : 0;

  if (stored_between(first, slot) >= config_.ar_order + 2) {
    try {
      const auto model = fit_ar(window, config_.ar_order, config_.ar_ridge);
      short_block_ = predict_ar(model, window.bottomRows(static_cast<Eigen::Index>(config_.ar_order)),
                                config_.horizon);
    } catch (const PredictorError&) {
      ++stats_.ar_failures;
    }
  }
  if (strategy_ == Strategy::Tap && mode_ == EngineMode::Tap) {
    long_block_ = gru_forward(*long_term_->generation(), window, config_.horizon);
    ++stats_.long_term_runs;
  }
}

ActuationDecision SupportEngine::decide_actuation(std::size_t now) {
  if (decided_slot_ && now <= *decided_slot_) {
    throw EngineError("decide_actuation called again for slot " + std::to_string(now));
  }
  decided_slot_ = now;

  ActuationDecision decision;
  decision.slot = now;
  auto hold = [&](bool cold) {
    decision.source = DecisionSource::HoldLast;
    decision.command = last_actuated_;
    if (cold) ++stats_.cold_start_holds;
  };

  if (!receipt_slot_) {
    decision.slots_since_receipt = now + 1;
    hold(true);
    return decision;
  }

  const std::size_t s = now - *receipt_slot_;
  decision.slots_since_receipt = s;
  const bool single = strategy_ == Strategy::SinglePredictive ||
                      (strategy_ == Strategy::Tap && mode_ == EngineMode::SinglePrediction);
  const auto row = static_cast<Eigen::Index>(s) - 1;

  if (s == 0) {
    decision.source = DecisionSource::Actual;
    decision.command = candidate_;
  } else if (strategy_ == Strategy::NonPredictive || s > config_.horizon) {
    hold(false);
  } else if (s == 1 || single) {
    if (short_block_) {
      decision.source = DecisionSource::ShortTerm;
      decision.command = short_block_->row(row).transpose();
    } else {
      hold(true);
    }
  } else if (long_block_) {
    decision.source = DecisionSource::LongTerm;
    decision.command = long_block_->row(row).transpose();
  } else {
    hold(true);
  }
  last_actuated_ = decision.command;
  return decision;
}

EngineMode SupportEngine::maybe_switch_mode(double short_val_ae, double long_val_ae) {
  if (strategy_ == Strategy::Tap && mode_ == EngineMode::SinglePrediction &&
      config_.mode_policy == ModePolicy::Online && long_val_ae < short_val_ae) {
    mode_ = EngineMode::Tap;
  }
  return mode_;
}

Eigen::MatrixXd SupportEngine::window_ending_at(std::size_t end_slot, std::size_t rows) const {
  if (history_.empty()) throw EngineError("history is empty");
  Eigen::MatrixXd window(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims_));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto offset = static_cast<long long>(end_slot) - static_cast<long long>(rows - 1 - i);
    auto out = window.row(static_cast<Eigen::Index>(i));
    if (offset < 0) {
      out = history_.begin()->second.transpose();
      continue;
    }
    const auto slot = static_cast<std::size_t>(offset);
    const auto upper = history_.lower_bound(slot);
    if (upper != history_.end() && upper->first == slot) {
      out = upper->second.transpose();
    } else if (upper == history_.begin()) {
      out = upper->second.transpose();
    } else if (upper == history_.end()) {
      out = std::prev(upper)->second.transpose();
    } else {
      const auto lower = std::prev(upper);
      const double t = static_cast<double>(slot - lower->first) / static_cast<double>(upper->first - lower->first);
      out = ((1.0 - t) * lower->second + t * upper->second).transpose();
    }
  }
  return window;
}

}  // namespace tapsim
