// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include "tapsim/gru.hpp"

namespace tapsim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamConfig config);

  /// Clips `gradient` to the configured global norm and applies one update.
  void step(Eigen::VectorXd& params, Eigen::VectorXd gradient);

  std::uint64_t step_count() const { return steps_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::uint64_t steps_ = 0;
};

/// Replay store of normalized (W, L) samples. The newest validation_fraction
/// of its contents is held out; batches are drawn from the remainder.
class TrainingBuffer {
 public:
  TrainingBuffer(std::size_t capacity, double validation_fraction = 0.1);

  void push(Sample sample);
  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t validation_size() const;
  std::size_t training_size() const { return size() - validation_size(); }

  std::vector<Sample> validation() const;
  /// Uniform draws with replacement from the training part.
  std::vector<Sample> sample_batch(std::mt19937_64& rng, std::size_t batch_size) const;

 private:
  std::size_t capacity_;
  double validation_fraction_;
  std::deque<Sample> samples_;
};

struct ValidationScores {
  double generation_ae = 0.0;
  double evaluation_ae = 0.0;
};

/// Serving (generation) network plus its training twin. Only the twin is
/// trained; promotion publishes a copy of it as the new generation snapshot.
/// generation() may be called from any thread while training proceeds.
class PredictorPair {
 public:
  PredictorPair(GruNetwork initial, AdamConfig optimizer = {});

  std::shared_ptr<const GruNetwork> generation() const;
  const GruNetwork& evaluation() const { return evaluation_; }
  const AdamOptimizer& optimizer() const { return optimizer_; }

  /// One optimizer update of the evaluation network; returns the pre-update
  /// MSE. Throws PredictorError if the loss is not finite.
  double train_step(std::span<const Sample> batch);

  ValidationScores evaluate(std::span<const Sample> validation) const;

  /// Publishes the evaluation weights iff its AE is strictly lower.
  bool maybe_promote(const ValidationScores& scores);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const GruNetwork> generation_;
  GruNetwork evaluation_;
  AdamOptimizer optimizer_;
};

struct TrainingSchedule {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  std::size_t eval_every = 200;
  std::uint64_t seed = 0;
};

struct TrainingLog {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double final_validation_ae = 0.0;
  std::size_t promotions = 0;
};

/// Offline training loop: fills a buffer from `samples`, trains the
/// evaluation network, and promotes after each evaluation round.
TrainingLog pretrain(PredictorPair& pair, std::span<const Sample> samples, const TrainingSchedule& schedule,
                     std::size_t buffer_capacity = 4096);

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape declared in a weight file header.
struct WeightShape {
  GruShape network;
  std::size_t lookback = 0;
  std::size_t horizon = 0;

  bool operator==(const WeightShape&) const = default;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

/// "TAPW", u32 version, u32 L, D, H, lookback, horizon, then every parameter
/// as a little-endian IEEE-754 double in GruNetwork::params() order.
void save_weights(const GruNetwork& net, std::size_t lookback, std::size_t horizon,
                  const std::filesystem::path& path);

struct LoadedWeights {
  GruNetwork network;
  WeightShape shape;
};

LoadedWeights load_weights(const std::filesystem::path& path);
/// As above, but rejects a file whose header differs from `expected`.
LoadedWeights load_weights(const std::filesystem::path& path, const WeightShape& expected);

}  // namespace tapsim
