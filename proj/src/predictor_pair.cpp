// SPDX-License-Identifier: Apache-2.0
#include "tapsim/predictor_pair.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace tapsim {

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {}

void AdamOptimizer::step(Eigen::VectorXd& params, Eigen::VectorXd gradient) {
  if (gradient.size() != params.size() || params.size() != m_.size()) {
    throw PredictorError("optimizer size mismatch");
  }
  if (config_.clip_norm > 0.0) {
    const double norm = gradient.norm();
    if (norm > config_.clip_norm) gradient *= config_.clip_norm / norm;
  }
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * gradient.cwiseAbs2();
  const double t = static_cast<double>(steps_);
  const double m_scale = 1.0 / (1.0 - std::pow(config_.beta1, t));
  const double v_scale = 1.0 / (1.0 - std::pow(config_.beta2, t));
  params.array() -= config_.learning_rate * (m_.array() * m_scale) /
                    ((v_.array() * v_scale).sqrt() + config_.epsilon);
}

TrainingBuffer::TrainingBuffer(std::size_t capacity, double validation_fraction)
    : capacity_(capacity), validation_fraction_(validation_fraction) {
  if (capacity_ == 0) throw PredictorError("training buffer capacity must be positive");
  if (!(validation_fraction_ >= 0.0 && validation_fraction_ < 1.0)) {
    throw PredictorError("validation fraction must lie in [0, 1)");
  }
}

void TrainingBuffer::push(Sample sample) {
  if (!samples_.empty() && (sample.window.rows() != samples_.front().window.rows() ||
                            sample.window.cols() != samples_.front().window.cols() ||
                            sample.label.rows() != samples_.front().label.rows())) {
    throw PredictorError("sample shape differs from the buffer's");
  }
  if (samples_.size() == capacity_) samples_.pop_front();
  samples_.push_back(std::move(sample));
}

std::size_t TrainingBuffer::validation_size() const {
  if (samples_.size() < 2 || validation_fraction_ == 0.0) return 0;
  const auto wanted = static_cast<std::size_t>(std::ceil(validation_fraction_ * static_cast<double>(size())));
  return std::clamp<std::size_t>(wanted, 1, size() - 1);
}

std::vector<Sample> TrainingBuffer::validation() const {
  return {samples_.end() - static_cast<std::ptrdiff_t>(validation_size()), samples_.end()};
}

std::vector<Sample> TrainingBuffer::sample_batch(std::mt19937_64& rng, std::size_t batch_size) const {
  if (training_size() == 0) throw PredictorError("training buffer holds no training samples");
  std::uniform_int_distribution<std::size_t> pick(0, training_size() - 1);
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(samples_[pick(rng)]);
  return batch;
}

PredictorPair::PredictorPair(GruNetwork initial, AdamConfig optimizer)
    : generation_(std::make_shared<const GruNetwork>(initial)),
      evaluation_(std::move(initial)),
      optimizer_(evaluation_.parameter_count(), optimizer) {}

std::shared_ptr<const GruNetwork> PredictorPair::generation() const {
  std::lock_guard lock(mutex_);
  return generation_;
}

double PredictorPair::train_step(std::span<const Sample> batch) {
  Eigen::VectorXd gradient;
  const double loss = gru_loss(evaluation_, batch, &gradient);
  if (!std::isfinite(loss) || !gradient.allFinite()) {
    throw PredictorError("non-finite training loss; reduce the learning rate");
  }
  optimizer_.step(evaluation_.params(), std::move(gradient));
  return loss;
}

ValidationScores PredictorPair::evaluate(std::span<const Sample> validation) const {
  return ValidationScores{evaluate_avg_ae(*generation(), validation), evaluate_avg_ae(evaluation_, validation)};
}

bool PredictorPair::maybe_promote(const ValidationScores& scores) {
  if (!(scores.evaluation_ae < scores.generation_ae)) return false;
  auto snapshot = std::make_shared<const GruNetwork>(evaluation_);
  std::lock_guard lock(mutex_);
  generation_ = std::move(snapshot);
  return true;
}

TrainingLog pretrain(PredictorPair& pair, std::span<const Sample> samples, const TrainingSchedule& schedule,
                     std::size_t buffer_capacity) {
  if (samples.empty()) throw PredictorError("no samples to pretrain on");
  std::mt19937_64 rng(schedule.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  TrainingBuffer buffer(buffer_capacity);
  for (const auto i : order) buffer.push(samples[i]);
  const auto validation = buffer.validation();

  TrainingLog log;
  auto round = [&] {
    if (validation.empty()) return;
    const auto scores = pair.evaluate(validation);
    if (pair.maybe_promote(scores)) ++log.promotions;
  };
  for (std::size_t step = 1; step <= schedule.steps; ++step) {
    const auto batch = buffer.sample_batch(rng, schedule.batch_size);
    log.final_loss = pair.train_step(batch);
    ++log.steps;
    if (schedule.eval_every > 0 && step % schedule.eval_every == 0) round();
  }
  round();
  log.final_validation_ae = validation.empty() ? 0.0 : evaluate_avg_ae(*pair.generation(), validation);
  return log;
}

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'A', 'P', 'W'};

void put_u32(std::ostream& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xFFu));
}

void put_f64(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint64_t take(std::size_t width) {
    if (pos_ + width > bytes_.size()) throw WeightFileError("weight file " + name_ + " is truncated");
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < width; ++i) value |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += width;
    return value;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(take(8)); }
  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<unsigned char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string describe(const WeightShape& s) {
  return "L=" + std::to_string(s.network.layers) + " D=" + std::to_string(s.network.input_dim) +
         " H=" + std::to_string(s.network.hidden_dim) + " lookback=" + std::to_string(s.lookback) +
         " horizon=" + std::to_string(s.horizon);
}

}  // namespace

void save_weights(const GruNetwork& net, std::size_t lookback, std::size_t horizon,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFileError("cannot write weight file " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kWeightFormatVersion);
  const auto& shape = net.shape();
  for (auto v : {shape.layers, shape.input_dim, shape.hidden_dim, lookback, horizon}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  for (Eigen::Index i = 0; i < net.params().size(); ++i) put_f64(out, net.params()(i));
  if (!out) throw WeightFileError("failed writing weight file " + path.string());
}

LoadedWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open weight file " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw WeightFileError("weight file " + path.string() + " has wrong magic bytes (expected TAPW)");
  }
  ByteReader reader(std::vector<unsigned char>(bytes.begin() + kMagic.size(), bytes.end()), path.string());
  const auto version = reader.u32();
  if (version != kWeightFormatVersion) {
    throw WeightFileError("weight file " + path.string() + " has format version " + std::to_string(version) +
                          ", expected " + std::to_string(kWeightFormatVersion));
  }
  WeightShape shape;
  shape.network.layers = reader.u32();
  shape.network.input_dim = reader.u32();
  shape.network.hidden_dim = reader.u32();
  shape.lookback = reader.u32();
  shape.horizon = reader.u32();
  if (shape.network.layers == 0 || shape.network.input_dim == 0 || shape.network.hidden_dim == 0 ||
      shape.horizon == 0) {
    throw WeightFileError("weight file " + path.string() + " declares an empty shape");
  }
  if (reader.remaining() < GruNetwork::parameter_count(shape.network) * 8) {
    throw WeightFileError("weight file " + path.string() + " is truncated: header declares " + describe(shape));
  }
  GruNetwork net(shape.network);
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()(i) = reader.f64();
  if (!reader.exhausted()) throw WeightFileError("weight file " + path.string() + " has trailing bytes");
  return LoadedWeights{std::move(net), shape};
}

LoadedWeights load_weights(const std::filesystem::path& path, const WeightShape& expected) {
  auto loaded = load_weights(path);
  if (!(loaded.shape == expected)) {
    throw WeightFileError("weight file " + path.string() + " declares " + describe(loaded.shape) +
                          " but the configuration expects " + describe(expected));
  }
  return loaded;
}

}  // namespace tapsim
