// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tapsim {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One slot's control signal. Values are flattened DoF-major: for
/// signals_per_dof = 3 the layout is [pos0, vel0, acc0, pos1, ...].
struct CommandMatrix {
  std::size_t slot = 0;
  Eigen::VectorXd values;
};

/// A multi-DoF command trajectory, one row per slot.
class TraceDataset {
 public:
  TraceDataset(std::size_t dof_count, std::size_t signals_per_dof,
               Eigen::MatrixXd samples, double sample_rate_hz,
               std::vector<std::string> column_names = {});

  std::size_t dof_count() const { return dof_count_; }
  std::size_t signals_per_dof() const { return signals_per_dof_; }
  std::size_t dims() const { return static_cast<std::size_t>(samples_.cols()); }
  std::size_t length() const { return static_cast<std::size_t>(samples_.rows()); }
  double sample_rate_hz() const { return sample_rate_hz_; }
  const Eigen::MatrixXd& samples() const { return samples_; }
  const std::vector<std::string>& column_names() const { return column_names_; }

  CommandMatrix command(std::size_t slot) const;

  /// Rows [begin, end). The result must still hold at least two rows.
  TraceDataset slice(std::size_t begin, std::size_t end) const;

  /// Column indices holding positions (every signals_per_dof-th column).
  std::vector<std::size_t> position_columns() const;

 private:
  std::size_t dof_count_;
  std::size_t signals_per_dof_;
  Eigen::MatrixXd samples_;
  double sample_rate_hz_;
  std::vector<std::string> column_names_;
};

TraceDataset load_trace_csv(const std::filesystem::path& path,
                            std::size_t signals_per_dof,
                            double sample_rate_hz = 1000.0);

/// Writes shortest round-trip decimal text, so loading it back is exact.
void save_trace_csv(const TraceDataset& dataset, const std::filesystem::path& path);

enum class SyntheticKind { MinimumJerk, SinusoidMixture, ConstantVelocity };

struct Waypoint {
  std::size_t slot = 0;
  std::vector<double> values;  // one position per DoF
};

struct SinusoidComponent {
  double amplitude = 0.0;
  double frequency_hz = 0.0;
  double phase = 0.0;
};

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::MinimumJerk;
  std::size_t dof_count = 1;
  std::size_t duration_slots = 2;
  std::size_t signals_per_dof = 1;
  double sample_rate_hz = 100.0;
  std::uint64_t seed = 0;

  // Minimum-jerk: explicit waypoints, or (when empty) a random schedule with
  // segment lengths in [min_segment_slots, max_segment_slots] and positions
  // uniform in [0, 1].
  std::vector<Waypoint> waypoints;
  std::size_t min_segment_slots = 40;
  std::size_t max_segment_slots = 80;
  // Repetitive task: when > 0 and no explicit waypoints are given, a loop of
  // this many waypoints (positions and segment lengths drawn from task_seed)
  // is repeated for the whole trace, entered at a phase drawn from `seed`.
  std::size_t cycle_waypoints = 0;
  std::uint64_t task_seed = 0;

  // Sinusoid mixture: the same components for every DoF, or (when empty)
  // component_count random components per DoF, with amplitudes summing to at
  // most max_amplitude.
  std::vector<SinusoidComponent> components;
  std::size_t component_count = 3;
  double max_amplitude = 0.4;
  double offset = 0.5;
  double max_frequency_hz = 1.0;

  // Constant velocity: a triangle wave reflecting inside [0, 1], moving
  // speed_per_slot each slot. The starting point of each DoF is seeded.
  double speed_per_slot = 0.02;
};

/// Position/velocity/acceleration of the minimum-jerk blend from x0 to x1 at
/// normalized time tau in [0, 1] over a segment of `duration_s` seconds.
struct JerkSample {
  double position;
  double velocity;
  double acceleration;
};
JerkSample minimum_jerk(double x0, double x1, double tau, double duration_s);

TraceDataset generate_synthetic(const SyntheticSpec& spec);

struct NormalizationSpec {
  Eigen::VectorXd min;
  Eigen::VectorXd max;
  std::vector<bool> degenerate;

  std::size_t dims() const { return static_cast<std::size_t>(min.size()); }
};

enum class Direction { Forward, Inverse };

NormalizationSpec fit_normalization(const TraceDataset& train);
NormalizationSpec fit_normalization(const Eigen::MatrixXd& train_rows);

Eigen::VectorXd apply_normalization(const NormalizationSpec& spec,
                                    const Eigen::VectorXd& vector, Direction direction);

/// Forward-normalizes every row.
Eigen::MatrixXd normalize_rows(const NormalizationSpec& spec, const Eigen::MatrixXd& rows);

}  // namespace tapsim
