// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "tapsim/trace_data.hpp"
#include "test_support.hpp"

using namespace tapsim;
using tapsim::testing::TempDir;
using tapsim::testing::write_file;

TEST_CASE("load_trace_csv reads an 18-DoF position-only file") {
  TempDir dir;
  std::string text;
  for (int d = 0; d < 18; ++d) text += (d ? ",j" : "j") + std::to_string(d);
  text += "\n";
  for (int t = 0; t < 1000; ++t) {
    for (int d = 0; d < 18; ++d) text += (d ? "," : "") + std::to_string(0.001 * t + d);
    text += "\n";
  }
  write_file(dir / "hand.csv", text);
  const auto data = load_trace_csv(dir / "hand.csv", 1);
  CHECK(data.dims() == 18);
  CHECK(data.dof_count() == 18);
  CHECK(data.length() == 1000);
  CHECK(data.column_names().at(17) == "j17");
}

TEST_CASE("load_trace_csv minimal file") {
  TempDir dir;
  write_file(dir / "min.csv", "x\r\n0.0\r\n1.0\r\n");
  const auto data = load_trace_csv(dir / "min.csv", 1);
  CHECK(data.length() == 2);
  CHECK(data.samples()(0, 0) == 0.0);
  CHECK(data.samples()(1, 0) == 1.0);
}

TEST_CASE("load_trace_csv error reporting") {
  TempDir dir;
  SUBCASE("non-numeric cell names row and column") {
    write_file(dir / "bad.csv", "a,b\na,b\n1,2\n");
    try {
      load_trace_csv(dir / "bad.csv", 1);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
      CHECK(std::string(e.what()).find("column 1") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_trace_csv(dir / "none.csv", 1), DataError); }
  SUBCASE("inconsistent width") {
    write_file(dir / "w.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_trace_csv(dir / "w.csv", 1), DataError);
  }
  SUBCASE("fewer than two rows") {
    write_file(dir / "one.csv", "a\n1\n");
    CHECK_THROWS_AS(load_trace_csv(dir / "one.csv", 1), DataError);
  }
  SUBCASE("width not a multiple of signals per DoF") {
    write_file(dir / "s.csv", "a,b\n1,2\n3,4\n");
    CHECK_THROWS_AS(load_trace_csv(dir / "s.csv", 3), DataError);
  }
  SUBCASE("non-finite value") {
    write_file(dir / "n.csv", "a\n1\nnan\n");
    CHECK_THROWS_AS(load_trace_csv(dir / "n.csv", 1), DataError);
  }
}

TEST_CASE("CSV export then load is exact") {
  TempDir dir;
  SyntheticSpec spec;
  spec.kind = SyntheticKind::SinusoidMixture;
  spec.dof_count = 3;
  spec.signals_per_dof = 3;
  spec.duration_slots = 50;
  spec.seed = 9;
  const auto data = generate_synthetic(spec);
  save_trace_csv(data, dir / "rt.csv");
  const auto back = load_trace_csv(dir / "rt.csv", 3, data.sample_rate_hz());
  REQUIRE(back.samples().rows() == data.samples().rows());
  CHECK(back.samples() == data.samples());
  CHECK(back.position_columns() == std::vector<std::size_t>{0, 3, 6});
}

TEST_CASE("minimum-jerk synthetic passes through its waypoints") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::MinimumJerk;
  spec.dof_count = 1;
  spec.duration_slots = 101;
  spec.waypoints = {{0, {0.0}}, {100, {1.0}}};
  const auto data = generate_synthetic(spec);
  CHECK(data.samples()(0, 0) == 0.0);
  CHECK(data.samples()(100, 0) == 1.0);
  // 10 tau^3 - 15 tau^4 + 6 tau^5 evaluated independently.
  CHECK(data.samples()(50, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(data.samples()(30, 0) == doctest::Approx(0.16307999999999995).epsilon(1e-13));
}

TEST_CASE("minimum-jerk velocity and acceleration vanish at segment ends") {
  const auto start = minimum_jerk(0.2, 0.8, 0.0, 0.5);
  const auto end = minimum_jerk(0.2, 0.8, 1.0, 0.5);
  CHECK(start.velocity == doctest::Approx(0.0));
  CHECK(end.velocity == doctest::Approx(0.0));
  CHECK(start.acceleration == doctest::Approx(0.0));
  CHECK(end.acceleration == doctest::Approx(0.0));
  // Peak velocity 1.875 * delta / duration at the midpoint.
  CHECK(minimum_jerk(0.2, 0.8, 0.5, 0.5).velocity == doctest::Approx(1.875 * 0.6 / 0.5));
}

TEST_CASE("synthetic generation is a pure function of its settings") {
  for (auto kind : {SyntheticKind::MinimumJerk, SyntheticKind::SinusoidMixture, SyntheticKind::ConstantVelocity}) {
    SyntheticSpec spec;
    spec.kind = kind;
    spec.dof_count = 4;
    spec.duration_slots = 300;
    spec.seed = 77;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.samples() == b.samples());
    spec.seed = 78;
    CHECK(generate_synthetic(spec).samples() != a.samples());
  }
}

TEST_CASE("sinusoid mixture stays within its amplitudes") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::SinusoidMixture;
  spec.dof_count = 5;
  spec.duration_slots = 2000;
  spec.max_amplitude = 0.3;
  spec.offset = 0.5;
  spec.seed = 3;
  const auto data = generate_synthetic(spec);
  CHECK(data.samples().maxCoeff() <= 0.8 + 1e-12);
  CHECK(data.samples().minCoeff() >= 0.2 - 1e-12);
}

TEST_CASE("constant-velocity trace reflects inside the unit interval") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::ConstantVelocity;
  spec.dof_count = 2;
  spec.duration_slots = 500;
  spec.speed_per_slot = 0.03;
  const auto x = generate_synthetic(spec).samples();
  CHECK(x.minCoeff() >= 0.0);
  CHECK(x.maxCoeff() <= 1.0);
  for (Eigen::Index t = 1; t < x.rows(); ++t) {
    CHECK(std::abs(x(t, 0) - x(t - 1, 0)) <= 0.03 + 1e-12);
  }
}

TEST_CASE("cyclic minimum-jerk trace repeats one loop") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::MinimumJerk;
  spec.dof_count = 2;
  spec.duration_slots = 400;
  spec.cycle_waypoints = 3;
  spec.min_segment_slots = 10;
  spec.max_segment_slots = 10;
  spec.task_seed = 5;
  spec.seed = 1;
  const auto a = generate_synthetic(spec).samples();
  CHECK(a.block(30, 0, 300, 2) == a.block(60, 0, 300, 2));  // period 3 x 10 slots
  spec.seed = 2;  // another phase of the same task
  const auto b = generate_synthetic(spec).samples();
  bool shifted = false;
  for (Eigen::Index s = 0; s < 30 && !shifted; ++s) shifted = a.block(s, 0, 300, 2) == b.block(0, 0, 300, 2);
  CHECK(shifted);
}

TEST_CASE("invalid synthetic settings are rejected") {
  SyntheticSpec spec;
  spec.duration_slots = 10;
  spec.waypoints = {{0, {0.0}}};
  CHECK_THROWS_AS(generate_synthetic(spec), DataError);
  spec.waypoints.clear();
  spec.duration_slots = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), DataError);
}

TEST_CASE("fit_normalization examples") {
  Eigen::MatrixXd rows(3, 2);
  rows << 2, 3, 4, 3, 3, 3;
  const auto spec = fit_normalization(rows);
  CHECK(spec.min(0) == 2.0);
  CHECK(spec.max(0) == 4.0);
  CHECK_FALSE(spec.degenerate[0]);
  CHECK(spec.degenerate[1]);
}

TEST_CASE("fit_normalization matches a column scan") {
  const Eigen::MatrixXd rows = tapsim::testing::uniform_matrix(200, 7, 4) * 10.0;
  const auto spec = fit_normalization(rows);
  for (Eigen::Index d = 0; d < rows.cols(); ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
      lo = std::min(lo, rows(t, d));
      hi = std::max(hi, rows(t, d));
    }
    CHECK(spec.min(d) == lo);
    CHECK(spec.max(d) == hi);
  }
}

TEST_CASE("apply_normalization examples") {
  NormalizationSpec spec{Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 4.0), {false}};
  auto forward = [&](double x) {
    return apply_normalization(spec, Eigen::VectorXd::Constant(1, x), Direction::Forward)(0);
  };
  CHECK(forward(3.0) == 0.5);
  CHECK(forward(5.0) == 1.0);
  CHECK(forward(-1.0) == 0.0);
  NormalizationSpec unit{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), {false}};
  CHECK(apply_normalization(unit, Eigen::VectorXd::Constant(1, 0.7), Direction::Forward)(0) == 0.7);
  NormalizationSpec flat{Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 3.0), {true}};
  CHECK(apply_normalization(flat, Eigen::VectorXd::Constant(1, 100.0), Direction::Forward)(0) == 0.5);
  CHECK(apply_normalization(flat, Eigen::VectorXd::Constant(1, 0.5), Direction::Inverse)(0) == 3.0);
  CHECK_THROWS_AS(apply_normalization(spec, Eigen::VectorXd::Zero(2), Direction::Forward), DataError);
}

TEST_CASE("normalization round trip and range properties") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> any(-1e3, 1e3);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = any(rng), b = any(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (lo == hi) continue;
    NormalizationSpec spec{Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi), {false}};
    const double x = std::uniform_real_distribution<double>(lo, hi)(rng);
    const auto y = apply_normalization(spec, Eigen::VectorXd::Constant(1, x), Direction::Forward);
    const auto back = apply_normalization(spec, y, Direction::Inverse);
    CHECK(std::abs(back(0) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
    const auto out = apply_normalization(spec, Eigen::VectorXd::Constant(1, 3.0 * any(rng)), Direction::Forward);
    CHECK(out(0) >= 0.0);
    CHECK(out(0) <= 1.0);
  }
}

TEST_CASE("TraceDataset invariants") {
  CHECK_THROWS_AS(TraceDataset(1, 1, Eigen::MatrixXd::Zero(1, 1), 100.0), DataError);
  CHECK_THROWS_AS(TraceDataset(1, 1, Eigen::MatrixXd::Zero(3, 1), 0.0), DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 1);
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(TraceDataset(1, 1, bad, 100.0), DataError);
  const TraceDataset ok(2, 1, tapsim::testing::uniform_matrix(5, 2, 1), 100.0);
  CHECK(ok.command(3).slot == 3);
  CHECK(ok.command(3).values == ok.samples().row(3).transpose());
  CHECK(ok.slice(1, 4).length() == 3);
}
