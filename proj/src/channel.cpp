// SPDX-License-Identifier: Apache-2.0
#include "tapsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tapsim {

void ChannelConfig::validate() const {
  if (!(latency_std_ms >= 0.0)) throw ChannelError("latency_std_ms must be >= 0");
  if (!(slot_duration_ms > 0.0)) throw ChannelError("slot_duration_ms must be > 0");
  if (period_k < 1) throw ChannelError("period_k must be >= 1");
  if (deadline_slots < 1) throw ChannelError("deadline_slots must be >= 1");
  if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) throw ChannelError("loss_prob must lie in [0, 1]");
  if (!std::isfinite(latency_mean_ms)) throw ChannelError("latency_mean_ms must be finite");
}

Channel::Channel(ChannelConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

double Channel::sample_latency_ms() {
  const double z = normal_(rng_);
  return std::max(0.0, config_.latency_mean_ms + config_.latency_std_ms * z);
}

bool Channel::transmit(Packet packet, std::size_t now) {
  if (packet.payload.empty()) throw ChannelError("packet " + std::to_string(packet.id) + " has an empty payload");
  if (packet.send_slot != now) {
    throw ChannelError("packet " + std::to_string(packet.id) + " sent at slot " + std::to_string(now) +
                       " but stamped for slot " + std::to_string(packet.send_slot));
  }
  if (clock_ && now <= *clock_) {
    throw ChannelError("transmit at slot " + std::to_string(now) + " after the clock reached " +
                       std::to_string(*clock_));
  }
  bool ordered = packet.payload.back().slot == packet.send_slot;
  for (std::size_t i = 1; i < packet.payload.size(); ++i) {
    ordered = ordered && packet.payload[i].slot > packet.payload[i - 1].slot;
  }
  if (!ordered) {
    throw ChannelError("packet " + std::to_string(packet.id) +
                       " payload slots must increase and end at the send slot");
  }

  const bool periodic = config_.mode != ChannelMode::Stochastic;
  const bool stochastic = config_.mode != ChannelMode::Periodic;
  if (periodic && now % config_.period_k != 0) {
    ++stats_.rejected;
    return false;
  }

  std::size_t arrival = now;
  if (stochastic) {
    const bool lost = uniform_(rng_) < config_.loss_prob;
    const double latency = sample_latency_ms();
    if (lost) {
      ++stats_.lost;
      return true;
    }
    arrival = now + static_cast<std::size_t>(std::ceil(latency / config_.slot_duration_ms));
  }

  DeliveryEvent event{packet.id, packet.send_slot, arrival,
                      arrival - packet.send_slot <= config_.deadline_slots, std::move(packet.payload)};
  in_flight_.emplace(std::make_pair(arrival, event.packet_id), std::move(event));
  return true;
}

std::vector<DeliveryEvent> Channel::advance_slot(std::size_t now) {
  if (clock_ && now <= *clock_) {
    throw ChannelError("clock must advance: slot " + std::to_string(now) + " after " + std::to_string(*clock_));
  }
  clock_ = now;
  std::vector<DeliveryEvent> events;
  auto it = in_flight_.begin();
  // Anything scheduled before `now` was skipped by the caller's clock; it is
  // delivered now rather than silently vanishing.
  while (it != in_flight_.end() && it->first.first <= now) {
    DeliveryEvent event = std::move(it->second);
    it = in_flight_.erase(it);
    event.arrival_slot = std::max(event.arrival_slot, now);
    event.on_time = event.arrival_slot - event.send_slot <= config_.deadline_slots;
    if (!event.on_time && config_.late_policy == LatePolicy::Drop) {
      ++stats_.dropped_late;
      continue;
    }
    ++stats_.delivered;
    events.push_back(std::move(event));
  }
  std::sort(events.begin(), events.end(),
            [](const DeliveryEvent& a, const DeliveryEvent& b) { return a.packet_id < b.packet_id; });
  return events;
}

}  // namespace tapsim
