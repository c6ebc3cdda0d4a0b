// SPDX-License-Identifier: Apache-2.0
#include "tapsim/trace_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace tapsim {

namespace {

std::vector<std::string> default_column_names(std::size_t dof_count, std::size_t signals_per_dof) {
  static constexpr const char* kSignal[] = {"pos", "vel", "acc"};
  std::vector<std::string> names;
  names.reserve(dof_count * signals_per_dof);
  for (std::size_t d = 0; d < dof_count; ++d) {
    for (std::size_t s = 0; s < signals_per_dof; ++s) {
      names.push_back("dof" + std::to_string(d) + "_" + kSignal[s]);
    }
  }
  return names;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

// Reflects an unbounded coordinate into [0, 1]; returns position and the sign
// of motion relative to the unreflected coordinate.
std::pair<double, double> reflect_unit(double u) {
  double m = std::fmod(u, 2.0);
  if (m < 0.0) m += 2.0;
  if (m <= 1.0) return {m, 1.0};
  return {2.0 - m, -1.0};
}

}  // namespace

TraceDataset::TraceDataset(std::size_t dof_count, std::size_t signals_per_dof,
                           Eigen::MatrixXd samples, double sample_rate_hz,
                           std::vector<std::string> column_names)
    : dof_count_(dof_count),
      signals_per_dof_(signals_per_dof),
      samples_(std::move(samples)),
      sample_rate_hz_(sample_rate_hz),
      column_names_(std::move(column_names)) {
  if (dof_count_ == 0) throw DataError("dataset needs at least one DoF");
  if (signals_per_dof_ != 1 && signals_per_dof_ != 3) {
    throw DataError("signals_per_dof must be 1 or 3, got " + std::to_string(signals_per_dof_));
  }
  if (static_cast<std::size_t>(samples_.cols()) != dof_count_ * signals_per_dof_) {
    throw DataError("dataset has " + std::to_string(samples_.cols()) + " columns, expected " +
                    std::to_string(dof_count_ * signals_per_dof_));
  }
  if (samples_.rows() < 2) throw DataError("dataset needs at least 2 rows");
  if (!(sample_rate_hz_ > 0.0)) throw DataError("sample rate must be positive");
  if (!samples_.allFinite()) throw DataError("dataset contains non-finite values");
  if (column_names_.empty()) {
    column_names_ = default_column_names(dof_count_, signals_per_dof_);
  } else if (column_names_.size() != dims()) {
    throw DataError("column name count does not match dataset width");
  }
}

CommandMatrix TraceDataset::command(std::size_t slot) const {
  if (slot >= length()) throw DataError("slot " + std::to_string(slot) + " beyond trace end");
  return CommandMatrix{slot, samples_.row(static_cast<Eigen::Index>(slot)).transpose()};
}

TraceDataset TraceDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > length()) throw DataError("invalid slice bounds");
  return TraceDataset(dof_count_, signals_per_dof_,
                      samples_.middleRows(static_cast<Eigen::Index>(begin),
                                          static_cast<Eigen::Index>(end - begin)),
                      sample_rate_hz_, column_names_);
}

std::vector<std::size_t> TraceDataset::position_columns() const {
  std::vector<std::size_t> columns;
  for (std::size_t d = 0; d < dof_count_; ++d) columns.push_back(d * signals_per_dof_);
  return columns;
}

TraceDataset load_trace_csv(const std::filesystem::path& path, std::size_t signals_per_dof,
                            double sample_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("trace file " + path.string() + " is empty");
  std::vector<std::string> header;
  for (auto cell : split_commas(line)) header.emplace_back(cell);
  const std::size_t width = header.size();
  if (signals_per_dof == 0 || width % signals_per_dof != 0) {
    throw DataError("header has " + std::to_string(width) + " columns, not a multiple of " +
                    std::to_string(signals_per_dof));
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++rows;
    const auto cells = split_commas(line);
    if (cells.size() != width) {
      throw DataError("row " + std::to_string(rows) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(rows) + ", column " + std::to_string(c + 1) +
                        ": non-numeric cell '" + std::string(cell) + "'");
      }
      values.push_back(v);
    }
  }
  if (rows < 2) throw DataError("trace needs at least 2 data rows, found " + std::to_string(rows));

  Eigen::MatrixXd samples(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * width + c];
    }
  }
  return TraceDataset(width / signals_per_dof, signals_per_dof, std::move(samples), sample_rate_hz,
                      std::move(header));
}

void save_trace_csv(const TraceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write trace file " + path.string());
  const auto& names = dataset.column_names();
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  char buffer[64];
  for (Eigen::Index r = 0; r < dataset.samples().rows(); ++r) {
    for (Eigen::Index c = 0; c < dataset.samples().cols(); ++c) {
      const auto result = std::to_chars(buffer, buffer + sizeof(buffer), dataset.samples()(r, c));
      if (c) out << ',';
      out.write(buffer, result.ptr - buffer);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing trace file " + path.string());
}

JerkSample minimum_jerk(double x0, double x1, double tau, double duration_s) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double delta = x1 - x0;
  const double t2 = tau * tau;
  const double t3 = t2 * tau;
  return JerkSample{
      x0 + delta * (10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2),
      delta * (30.0 * t2 - 60.0 * t3 + 30.0 * t2 * t2) / duration_s,
      delta * (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (duration_s * duration_s),
  };
}

namespace {

std::vector<Waypoint> random_schedule(const SyntheticSpec& spec, std::mt19937_64& rng) {
  if (spec.min_segment_slots == 0 || spec.max_segment_slots < spec.min_segment_slots) {
    throw DataError("invalid random segment length range");
  }
  std::uniform_int_distribution<std::size_t> segment(spec.min_segment_slots, spec.max_segment_slots);
  std::uniform_real_distribution<double> position(0.0, 1.0);
  std::vector<Waypoint> waypoints;
  std::size_t slot = 0;
  while (true) {
    Waypoint w{slot, std::vector<double>(spec.dof_count)};
    for (auto& v : w.values) v = position(rng);
    waypoints.push_back(std::move(w));
    if (slot + 1 >= spec.duration_slots) break;
    slot += segment(rng);
  }
  return waypoints;
}

// The loop's waypoints, laid out from slot 0 up to the last slot, with the
// trace starting `phase` slots into the loop.
std::vector<Waypoint> cyclic_schedule(const SyntheticSpec& spec, std::mt19937_64& rng, std::size_t& phase) {
  if (spec.min_segment_slots == 0 || spec.max_segment_slots < spec.min_segment_slots) {
    throw DataError("invalid random segment length range");
  }
  std::mt19937_64 task(spec.task_seed);
  std::uniform_int_distribution<std::size_t> segment(spec.min_segment_slots, spec.max_segment_slots);
  std::uniform_real_distribution<double> position(0.0, 1.0);
  std::vector<std::vector<double>> loop(spec.cycle_waypoints, std::vector<double>(spec.dof_count));
  std::vector<std::size_t> lengths(spec.cycle_waypoints);
  std::size_t period = 0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    for (auto& v : loop[i]) v = position(task);
    period += lengths[i] = segment(task);
  }
  phase = std::uniform_int_distribution<std::size_t>(0, period - 1)(rng);

  std::vector<Waypoint> waypoints;
  std::size_t slot = 0;
  for (std::size_t i = 0; slot < phase + spec.duration_slots + period; ++i) {
    waypoints.push_back({slot, loop[i % loop.size()]});
    slot += lengths[i % loop.size()];
  }
  return waypoints;
}

Eigen::MatrixXd minimum_jerk_samples(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::size_t phase = 0;
  const auto waypoints = !spec.waypoints.empty()     ? spec.waypoints
                         : spec.cycle_waypoints > 0 ? cyclic_schedule(spec, rng, phase)
                                                     : random_schedule(spec, rng);
  if (waypoints.size() < 2) throw DataError("minimum-jerk trajectory needs at least 2 waypoints");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if (waypoints[i].values.size() != spec.dof_count) {
      throw DataError("waypoint " + std::to_string(i) + " has " +
                      std::to_string(waypoints[i].values.size()) + " values, expected " +
                      std::to_string(spec.dof_count));
    }
    if (i > 0 && waypoints[i].slot <= waypoints[i - 1].slot) {
      throw DataError("waypoint slots must be strictly increasing");
    }
  }

  const auto spd = spec.signals_per_dof;
  Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.duration_slots),
                                                  static_cast<Eigen::Index>(spec.dof_count * spd));
  std::size_t segment = 0;
  for (std::size_t row_index = 0; row_index < spec.duration_slots; ++row_index) {
    const std::size_t t = row_index + phase;
    while (segment + 1 < waypoints.size() && t >= waypoints[segment + 1].slot) ++segment;
    const auto row = static_cast<Eigen::Index>(row_index);
    for (std::size_t d = 0; d < spec.dof_count; ++d) {
      JerkSample s{};
      if (t <= waypoints.front().slot) {
        s = {waypoints.front().values[d], 0.0, 0.0};
      } else if (segment + 1 >= waypoints.size()) {
        s = {waypoints.back().values[d], 0.0, 0.0};
      } else {
        const auto& a = waypoints[segment];
        const auto& b = waypoints[segment + 1];
        const double span = static_cast<double>(b.slot - a.slot);
        s = minimum_jerk(a.values[d], b.values[d], static_cast<double>(t - a.slot) / span,
                         span / spec.sample_rate_hz);
      }
      const auto col = static_cast<Eigen::Index>(d * spd);
      samples(row, col) = s.position;
      if (spd == 3) {
        samples(row, col + 1) = s.velocity;
        samples(row, col + 2) = s.acceleration;
      }
    }
  }
  return samples;
}

Eigen::MatrixXd sinusoid_samples(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::vector<std::vector<SinusoidComponent>> per_dof(spec.dof_count, spec.components);
  if (spec.components.empty()) {
    if (spec.component_count == 0) throw DataError("sinusoid mixture needs at least one component");
    std::uniform_real_distribution<double> weight(0.2, 1.0);
    std::uniform_real_distribution<double> scale(0.5, 1.0);
    std::uniform_real_distribution<double> freq(0.05, spec.max_frequency_hz);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (auto& comps : per_dof) {
      std::vector<double> w(spec.component_count);
      double total = 0.0;
      for (auto& x : w) total += (x = weight(rng));
      const double budget = spec.max_amplitude * scale(rng);
      for (std::size_t k = 0; k < spec.component_count; ++k) {
        comps.push_back({budget * w[k] / total, freq(rng), phase(rng)});
      }
    }
  }
  const auto spd = spec.signals_per_dof;
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(spec.duration_slots),
                          static_cast<Eigen::Index>(spec.dof_count * spd));
  for (std::size_t t = 0; t < spec.duration_slots; ++t) {
    const double time = static_cast<double>(t) / spec.sample_rate_hz;
    for (std::size_t d = 0; d < spec.dof_count; ++d) {
      double pos = spec.offset, vel = 0.0, acc = 0.0;
      for (const auto& c : per_dof[d]) {
        const double w = 2.0 * std::numbers::pi * c.frequency_hz;
        pos += c.amplitude * std::sin(w * time + c.phase);
        vel += c.amplitude * w * std::cos(w * time + c.phase);
        acc -= c.amplitude * w * w * std::sin(w * time + c.phase);
      }
      const auto row = static_cast<Eigen::Index>(t);
      const auto col = static_cast<Eigen::Index>(d * spd);
      samples(row, col) = pos;
      if (spd == 3) {
        samples(row, col + 1) = vel;
        samples(row, col + 2) = acc;
      }
    }
  }
  return samples;
}

Eigen::MatrixXd constant_velocity_samples(const SyntheticSpec& spec, std::mt19937_64& rng) {
  if (!(spec.speed_per_slot > 0.0)) throw DataError("constant-velocity speed must be positive");
  std::uniform_real_distribution<double> start(0.0, 2.0);
  const auto spd = spec.signals_per_dof;
  Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.duration_slots),
                                                  static_cast<Eigen::Index>(spec.dof_count * spd));
  for (std::size_t d = 0; d < spec.dof_count; ++d) {
    const double origin = start(rng);
    for (std::size_t t = 0; t < spec.duration_slots; ++t) {
      const auto [pos, sign] = reflect_unit(origin + spec.speed_per_slot * static_cast<double>(t));
      const auto row = static_cast<Eigen::Index>(t);
      const auto col = static_cast<Eigen::Index>(d * spd);
      samples(row, col) = pos;
      if (spd == 3) samples(row, col + 1) = sign * spec.speed_per_slot * spec.sample_rate_hz;
    }
  }
  return samples;
}

}  // namespace

TraceDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.duration_slots < 2) throw DataError("synthetic trace needs duration_slots >= 2");
  if (spec.dof_count == 0) throw DataError("synthetic trace needs at least one DoF");
  if (spec.signals_per_dof != 1 && spec.signals_per_dof != 3) {
    throw DataError("signals_per_dof must be 1 or 3");
  }
  std::mt19937_64 rng(spec.seed);
  Eigen::MatrixXd samples;
  switch (spec.kind) {
    case SyntheticKind::MinimumJerk:
      samples = minimum_jerk_samples(spec, rng);
      break;
    case SyntheticKind::SinusoidMixture:
      samples = sinusoid_samples(spec, rng);
      break;
    case SyntheticKind::ConstantVelocity:
      samples = constant_velocity_samples(spec, rng);
      break;
  }
  return TraceDataset(spec.dof_count, spec.signals_per_dof, std::move(samples), spec.sample_rate_hz);
}

NormalizationSpec fit_normalization(const Eigen::MatrixXd& train_rows) {
  if (train_rows.rows() < 1) throw DataError("normalization needs at least one row");
  NormalizationSpec spec;
  spec.min = train_rows.colwise().minCoeff().transpose();
  spec.max = train_rows.colwise().maxCoeff().transpose();
  spec.degenerate.resize(static_cast<std::size_t>(train_rows.cols()));
  for (Eigen::Index d = 0; d < train_rows.cols(); ++d) {
    spec.degenerate[static_cast<std::size_t>(d)] = spec.max(d) == spec.min(d);
  }
  return spec;
}

NormalizationSpec fit_normalization(const TraceDataset& train) {
  return fit_normalization(train.samples());
}

Eigen::VectorXd apply_normalization(const NormalizationSpec& spec, const Eigen::VectorXd& vector,
                                    Direction direction) {
  if (static_cast<std::size_t>(vector.size()) != spec.dims()) {
    throw DataError("normalization expects length " + std::to_string(spec.dims()) + ", got " +
                    std::to_string(vector.size()));
  }
  Eigen::VectorXd out(vector.size());
  for (Eigen::Index d = 0; d < vector.size(); ++d) {
    const double lo = spec.min(d);
    const double range = spec.max(d) - lo;
    if (spec.degenerate[static_cast<std::size_t>(d)]) {
      out(d) = direction == Direction::Forward ? 0.5 : lo;
    } else if (direction == Direction::Forward) {
      out(d) = std::clamp((vector(d) - lo) / range, 0.0, 1.0);
    } else {
      out(d) = lo + vector(d) * range;
    }
  }
  return out;
}

Eigen::MatrixXd normalize_rows(const NormalizationSpec& spec, const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    out.row(r) = apply_normalization(spec, rows.row(r).transpose(), Direction::Forward).transpose();
  }
  return out;
}

}  // namespace tapsim
