// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tapsim/scenario.hpp"
#include "tapsim/simulator.hpp"
#include "tapsim/verify/ar_oracle.hpp"
#include "tapsim/verify/gradcheck.hpp"

namespace tapsim::cli {

namespace {

void print_checks(const verify::Report& report, std::ostream& out) {
  for (const auto& check : report.checks) {
    out << (check.passed ? "PASS " : "FAIL ") << check.name << ": max error " << check.max_error
        << " (tolerance " << check.tolerance << ")\n";
  }
  out << "elapsed " << report.seconds << " s\n";
}

int finish_checks(const verify::Report& report, std::ostream& out, std::ostream& err) {
  print_checks(report, out);
  if (report.passed()) return 0;
  for (const auto& check : report.checks) {
    if (!check.passed) err << "error: check failed: " << check.name << "\n";
  }
  return 1;
}

int run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
        std::optional<std::uint64_t> seed, bool verbose, std::ostream& out, std::ostream& err) {
  auto config = load_scenario(config_path);
  if (seed) config.experiment.base_seed = *seed;
  const auto scenario = PreparedScenario::prepare(config, verbose ? &err : nullptr);
  const auto report = run_experiment(scenario);
  export_report(report, out_dir);
  for (const auto& s : report.strategies) {
    out << to_string(s.strategy) << ": success " << s.success_probability << " (" << s.successes << "/"
        << s.episodes << "), mean AE " << s.mean_ae << " +- " << s.std_ae << "\n";
  }
  out << "wrote " << (out_dir / "report.json").string() << " and " << (out_dir / "per_slot.csv").string() << "\n";
  return 0;
}

int train(const std::filesystem::path& config_path, const std::filesystem::path& weights_out,
          std::optional<std::size_t> steps, bool verbose, std::ostream& out, std::ostream& err) {
  auto config = load_scenario(config_path);
  if (steps) config.training.schedule.steps = *steps;
  config.training.weights.clear();
  config.engine.mode_policy = ModePolicy::Offline;
  config.strategies = {Strategy::Tap};
  const auto scenario = PreparedScenario::prepare(config, verbose ? &err : nullptr);
  const auto* pair = scenario.predictors();
  save_weights(*pair->generation(), config.engine.lookback, config.engine.horizon, weights_out);
  const auto& log = scenario.training_log();
  out << "trained " << log.steps << " steps, " << log.promotions << " promotions, final loss " << log.final_loss
      << "\nfinal validation avg-AE " << log.final_validation_ae << "\nwrote " << weights_out.string() << "\n";
  return 0;
}

int replay(const std::filesystem::path& config_path, std::uint64_t episode_seed, const std::filesystem::path& out_dir,
           bool verbose, std::ostream& out, std::ostream& err) {
  const auto config = load_scenario(config_path);
  const auto scenario = PreparedScenario::prepare(config, verbose ? &err : nullptr);
  std::vector<EpisodeResult> episodes;
  for (const auto strategy : config.strategies) episodes.push_back(run_episode(scenario, strategy, episode_seed));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto path = out_dir / "episode.csv";
  export_episode_csv(episodes, path);
  for (const auto& e : episodes) {
    out << to_string(e.strategy) << ": seed " << e.seed << ", average AE " << e.average_ae << ", "
        << (e.success ? "success" : "failure") << "\n";
    if (verbose) {
      for (const auto& r : e.records) {
        err << "  slot " << r.slot << " " << to_string(r.decision) << " max AE " << r.ae.maxCoeff() << "\n";
      }
    }
  }
  out << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int execute(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slotted networked-control simulator with temporal-adaptive command prediction", "tapsim"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Progress and per-slot logging on stderr");

  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::filesystem::path weights_out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::uint64_t episode_seed = 0;

  auto* run_cmd = app.add_subcommand("run", "Run every configured strategy and write report files");
  run_cmd->add_option("--config", config_path, "Scenario JSON")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--seed", seed, "Override experiment.base_seed");

  auto* train_cmd = app.add_subcommand("train", "Pre-train the long-term predictor and write a weight file");
  train_cmd->add_option("--config", config_path, "Scenario JSON")->required();
  train_cmd->add_option("--weights-out", weights_out, "Weight file to write")->required();
  train_cmd->add_option("--steps", steps, "Override training.steps");

  auto* replay_cmd = app.add_subcommand("replay", "Run one episode per strategy with per-slot output");
  replay_cmd->add_option("--config", config_path, "Scenario JSON")->required();
  replay_cmd->add_option("--episode-seed", episode_seed, "Episode seed")->required();
  replay_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the GRU gradients");
  auto* oracle_cmd = app.add_subcommand("oracle", "AR fit against an independent normal-equations solver");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (run_cmd->parsed()) return run(config_path, out_dir, seed, verbose, out, err);
    if (train_cmd->parsed()) return train(config_path, weights_out, steps, verbose, out, err);
    if (replay_cmd->parsed()) return replay(config_path, episode_seed, out_dir, verbose, out, err);
    if (gradcheck_cmd->parsed()) return finish_checks(verify::run_gradcheck_suite(), out, err);
    if (oracle_cmd->parsed()) return finish_checks(verify::run_ar_oracle_suite(), out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace tapsim::cli
