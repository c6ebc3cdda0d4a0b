// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tapsim/trace_data.hpp"

namespace tapsim {

class ChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ChannelMode { Stochastic, Periodic, Composite };
enum class LatePolicy { History, Drop };

struct ChannelConfig {
  ChannelMode mode = ChannelMode::Stochastic;
  double latency_mean_ms = 0.0;
  double latency_std_ms = 0.0;  // standard deviation, not variance
  double loss_prob = 0.0;
  std::size_t period_k = 1;
  double slot_duration_ms = 10.0;
  std::size_t deadline_slots = 1;
  LatePolicy late_policy = LatePolicy::History;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Packet {
  std::uint64_t id = 0;
  std::size_t send_slot = 0;
  std::vector<CommandMatrix> payload;
};

struct DeliveryEvent {
  std::uint64_t packet_id = 0;
  std::size_t send_slot = 0;
  std::size_t arrival_slot = 0;
  bool on_time = false;
  std::vector<CommandMatrix> payload;
};

struct ChannelStats {
  std::size_t rejected = 0;  // refused by the periodic gate
  std::size_t lost = 0;
  std::size_t delivered = 0;
  std::size_t dropped_late = 0;
};

/// Slotted command link. Packets are transmitted in their send slot and
/// surface from advance_slot() at their arrival slot.
class Channel {
 public:
  explicit Channel(ChannelConfig config);

  /// Returns whether the packet entered the channel. A lost packet counts as
  /// entered; it simply never arrives.
  bool transmit(Packet packet, std::size_t now);

  /// Events arriving exactly at `now`, ordered by packet id. The clock must
  /// move strictly forward between calls.
  std::vector<DeliveryEvent> advance_slot(std::size_t now);

  std::size_t in_flight() const { return in_flight_.size(); }
  const ChannelStats& stats() const { return stats_; }
  const ChannelConfig& config() const { return config_; }

  /// Latency draw in ms, Normal(mean, std) clamped at zero.
  double sample_latency_ms();

 private:
  ChannelConfig config_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::map<std::pair<std::size_t, std::uint64_t>, DeliveryEvent> in_flight_;
  std::optional<std::size_t> clock_;
  ChannelStats stats_;
};

}  // namespace tapsim
