// SPDX-License-Identifier: Apache-2.0
#include "tapsim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace tapsim {

namespace {

constexpr std::uint64_t kTrainingSeedOffset = 100000;

Eigen::VectorXd pick(const Eigen::VectorXd& values, const std::vector<std::size_t>& columns) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = values(static_cast<Eigen::Index>(columns[i]));
  }
  return out;
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace

const StrategySummary& ExperimentReport::summary(Strategy strategy) const {
  for (const auto& s : strategies) {
    if (s.strategy == strategy) return s;
  }
  throw SimulationError("strategy " + std::string(to_string(strategy)) + " is not part of the report");
}

PreparedScenario::PreparedScenario(ScenarioConfig config, Eigen::MatrixXd trajectory,
                                   std::vector<std::size_t> position_columns,
                                   std::shared_ptr<PredictorPair> predictors)
    : config_(std::move(config)),
      trajectory_(std::move(trajectory)),
      position_columns_(std::move(position_columns)),
      predictors_(std::move(predictors)) {
  if (trajectory_.rows() < 1) throw SimulationError("trajectory is empty");
  normalization_ = fit_normalization(trajectory_);
  training_rows_.push_back(trajectory_);
  config_.data.vary_per_episode = false;
}

PreparedScenario PreparedScenario::prepare(const ScenarioConfig& config, std::ostream* log) {
  PreparedScenario scenario;
  scenario.config_ = config;
  const auto& data = config.data;

  TraceDataset evaluation = [&] {
    if (data.source == DataSource::Synthetic) return generate_synthetic(data.synthetic);
    return load_trace_csv(data.trace_path, data.signals_per_dof, data.sample_rate_hz);
  }();

  std::vector<Eigen::MatrixXd> raw_training;
  if (data.source == DataSource::Synthetic) {
    for (std::size_t k = 0; k < data.training_traces; ++k) {
      auto spec = data.synthetic;
      spec.seed = data.synthetic.seed + kTrainingSeedOffset + k;
      raw_training.push_back(generate_synthetic(spec).samples());
    }
    if (raw_training.empty()) raw_training.push_back(evaluation.samples());
  } else {
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
      throw SimulationError("data.train_fraction must lie strictly between 0 and 1");
    }
    const auto split = static_cast<std::size_t>(std::floor(data.train_fraction * static_cast<double>(evaluation.length())));
    if (split < 2 || evaluation.length() - split < 2) throw SimulationError("trace too short to split");
    raw_training.push_back(evaluation.slice(0, split).samples());
    evaluation = evaluation.slice(split, evaluation.length());
  }

  Eigen::Index total_rows = 0;
  for (const auto& rows : raw_training) total_rows += rows.rows();
  Eigen::MatrixXd stacked(total_rows, static_cast<Eigen::Index>(evaluation.dims()));
  Eigen::Index offset = 0;
  for (const auto& rows : raw_training) {
    stacked.middleRows(offset, rows.rows()) = rows;
    offset += rows.rows();
  }
  scenario.normalization_ = fit_normalization(stacked);
  for (const auto& rows : raw_training) scenario.training_rows_.push_back(normalize_rows(scenario.normalization_, rows));
  scenario.trajectory_ = normalize_rows(scenario.normalization_, evaluation.samples());
  scenario.position_columns_ = evaluation.position_columns();

  if (static_cast<std::size_t>(scenario.trajectory_.rows()) > config.experiment.slot_budget) {
    throw SimulationError("trajectory of " + std::to_string(scenario.trajectory_.rows()) +
                          " slots exceeds the slot budget " + std::to_string(config.experiment.slot_budget));
  }

  const bool needs_long_term =
      std::find(config.strategies.begin(), config.strategies.end(), Strategy::Tap) != config.strategies.end();
  if (needs_long_term) {
    const GruShape shape{config.training.layers, evaluation.dims(), config.training.hidden};
    if (!config.training.weights.empty()) {
      auto loaded = load_weights(config.training.weights,
                                 WeightShape{shape, config.engine.lookback, config.engine.horizon});
      scenario.predictors_ = std::make_shared<PredictorPair>(std::move(loaded.network), config.training.adam);
      if (log) *log << "loaded long-term weights from " << config.training.weights.string() << "\n";
    } else {
      scenario.predictors_ =
          std::make_shared<PredictorPair>(init_gru(config.training.init_seed, shape), config.training.adam);
      if (config.engine.mode_policy == ModePolicy::Online) {
        scenario.bootstrap_ = run_online_session(scenario.training_rows_.front(), online_session_config(config));
        scenario.predictors_ = scenario.bootstrap_->predictors;
        if (log) {
          *log << "online bootstrap: " << scenario.bootstrap_->training_steps << " steps, mode "
               << to_string(scenario.bootstrap_->final_mode) << "\n";
        }
      } else if (config.training.schedule.steps > 0) {
        const auto samples = training_samples(scenario);
        scenario.training_log_ =
            pretrain(*scenario.predictors_, samples, config.training.schedule, config.training.buffer_capacity);
        if (log) {
          *log << "pre-trained long-term predictor: " << scenario.training_log_.steps << " steps, validation AE "
               << scenario.training_log_.final_validation_ae << "\n";
        }
      }
    }
  }
  return scenario;
}

Eigen::MatrixXd PreparedScenario::trajectory(std::uint64_t episode_seed) const {
  if (!config_.data.vary_per_episode) return trajectory_;
  auto spec = config_.data.synthetic;
  spec.seed = config_.data.synthetic.seed + episode_seed;
  return normalize_rows(normalization_, generate_synthetic(spec).samples());
}

OnlineSessionConfig online_session_config(const ScenarioConfig& config) {
  OnlineSessionConfig online;
  online.engine = config.engine;
  online.channel = config.channel;
  online.channel.seed = config.experiment.base_seed;
  const auto& tr = config.training;
  online.layers = tr.layers;
  online.hidden = tr.hidden;
  online.init_seed = tr.init_seed;
  online.adam = tr.adam;
  online.batch_size = tr.schedule.batch_size;
  online.buffer_capacity = tr.buffer_capacity;
  online.steps_per_slot = tr.steps_per_slot;
  online.eval_every = tr.schedule.eval_every;
  online.min_buffer = tr.min_buffer;
  online.max_steps = tr.max_online_steps;
  online.seed = tr.schedule.seed;
  return online;
}

std::vector<Sample> training_samples(const PreparedScenario& scenario) {
  std::vector<Sample> samples;
  const auto& engine = scenario.config().engine;
  for (const auto& rows : scenario.training_rows()) {
    auto part = make_samples(rows, engine.lookback, engine.horizon);
    std::move(part.begin(), part.end(), std::back_inserter(samples));
  }
  if (samples.empty()) throw SimulationError("training trajectories are shorter than lookback + horizon + 1");
  return samples;
}

EpisodeResult run_episode(const PreparedScenario& scenario, Strategy strategy, std::uint64_t seed) {
  const auto& config = scenario.config();
  const Eigen::MatrixXd trajectory = scenario.trajectory(seed);
  const auto length = static_cast<std::size_t>(trajectory.rows());
  if (length == 0) throw SimulationError("empty trajectory");

  auto channel_config = config.channel;
  channel_config.seed = seed;
  Channel channel(channel_config);
  SupportEngine engine(config.engine, strategy, trajectory.row(0).transpose(),
                       strategy == Strategy::Tap ? scenario.predictors() : nullptr);

  // An engine that qualified for TAP during the bootstrap starts there.
  if (const auto& boot = scenario.bootstrap(); boot && strategy == Strategy::Tap) {
    if (const auto* round = boot->switch_round()) engine.maybe_switch_mode(round->short_term_ae, round->long_term_ae);
  }

  const std::size_t mu = config.engine.bundling
                             ? compute_mu(config.engine.sample_rate_hz, config.engine.transmit_rate_hz)
                             : 1;
  const std::size_t deadline = channel_config.deadline_slots;
  const auto& columns = scenario.position_columns();
  auto command = [&](std::size_t slot) {
    return CommandMatrix{slot, trajectory.row(static_cast<Eigen::Index>(slot)).transpose()};
  };

  EpisodeResult result;
  result.seed = seed;
  result.strategy = strategy;
  result.records.reserve(length);

  // Slot t is actuated once the clock reaches t + deadline, so every packet
  // that can still be on time for t has had its chance to arrive.
  std::map<std::size_t, std::vector<DeliveryEvent>> pending;
  std::uint64_t next_id = 0;
  for (std::size_t clock = 0; clock < length + deadline; ++clock) {
    if (clock < length && clock % mu == 0) {
      Packet packet{next_id++, clock, {}};
      if (mu == 1 || clock == 0) {
        packet.payload.push_back(command(clock));
      } else {
        std::vector<CommandMatrix> recent;
        for (std::size_t s = clock + 1 - mu; s <= clock; ++s) recent.push_back(command(s));
        packet.payload = bundle(recent, mu);
      }
      channel.transmit(std::move(packet), clock);
    }
    for (auto& event : channel.advance_slot(clock)) {
      result.deliveries.emplace_back(event.arrival_slot, event.packet_id, event.on_time);
      const std::size_t target = event.on_time ? event.payload.back().slot : clock - deadline;
      pending[target].push_back(std::move(event));
    }
    if (clock < deadline) continue;

    const std::size_t slot = clock - deadline;
    if (auto it = pending.find(slot); it != pending.end()) {
      std::stable_partition(it->second.begin(), it->second.end(), [](const DeliveryEvent& e) { return !e.on_time; });
      for (const auto& event : it->second) engine.ingest_delivery(event.payload, event.on_time, slot);
      pending.erase(it);
    }
    const auto decision = engine.decide_actuation(slot);
    SlotRecord record;
    record.slot = slot;
    record.source = pick(trajectory.row(static_cast<Eigen::Index>(slot)).transpose(), columns);
    record.actuated = pick(decision.command, columns);
    record.ae = (record.actuated - record.source).cwiseAbs();
    record.decision = decision.source;
    result.records.push_back(std::move(record));
  }

  result.engine = engine.stats();
  result.average_ae = average_ae(result.records);
  result.success = evaluate_success(result.records, config.experiment.waypoints, config.experiment.success_tolerance,
                                    config.experiment.dwell_slots);
  return result;
}

bool evaluate_success(std::span<const SlotRecord> records, std::span<const std::size_t> waypoints, double tolerance,
                      std::size_t dwell) {
  auto within = [&](std::size_t i) { return records[i].ae.size() == 0 || records[i].ae.maxCoeff() <= tolerance; };
  for (const auto waypoint : waypoints) {
    if (waypoint >= records.size()) {
      throw SimulationError("waypoint slot " + std::to_string(waypoint) + " lies beyond the " +
                            std::to_string(records.size()) + "-slot episode");
    }
    if (!within(waypoint)) return false;
    std::size_t run = 1;
    for (std::size_t i = waypoint; i > 0 && within(i - 1) && run < dwell; --i) ++run;
    for (std::size_t i = waypoint + 1; i < records.size() && within(i) && run < dwell; ++i) ++run;
    if (run < dwell) return false;
  }
  return true;
}

double average_ae(std::span<const SlotRecord> records) {
  if (records.empty()) throw SimulationError("no slot records to average");
  double total = 0.0;
  double count = 0.0;
  for (const auto& r : records) {
    total += r.ae.sum();
    count += static_cast<double>(r.ae.size());
  }
  if (count == 0.0) throw SimulationError("slot records carry no dimensions");
  return total / count;
}

double success_probability(std::span<const EpisodeResult> results) {
  if (results.empty()) throw SimulationError("no episodes to score");
  const auto successes = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.success; });
  return static_cast<double>(successes) / static_cast<double>(results.size());
}

std::size_t episode_threads() {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TAPSIM_THREADS")) {
    std::size_t cap = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec == std::errc() && ptr == text.data() + text.size() && cap > 0) threads = std::min(threads, cap);
  }
  return threads;
}

ExperimentReport run_experiment(const PreparedScenario& scenario) {
  const auto& config = scenario.config();
  const std::size_t episodes = config.experiment.episodes;
  const auto& strategies = config.strategies;
  const std::size_t jobs = episodes * strategies.size();

  std::vector<EpisodeResult> results(jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      try {
        results[job] = run_episode(scenario, strategies[job % strategies.size()],
                                   config.experiment.base_seed + job / strategies.size());
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs;
      }
    }
  };
  const std::size_t threads = std::min(episode_threads(), jobs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentReport report;
  report.config = to_json(config);
  for (std::size_t i = 0; i < episodes; ++i) report.seeds.push_back(config.experiment.base_seed + i);

  for (std::size_t k = 0; k < strategies.size(); ++k) {
    StrategySummary summary;
    summary.strategy = strategies[k];
    summary.episodes = episodes;
    std::vector<double> averages;
    std::vector<double> slot_totals;
    std::vector<std::array<std::size_t, 4>> slot_sources;
    for (std::size_t i = 0; i < episodes; ++i) {
      const auto& episode = results[i * strategies.size() + k];
      averages.push_back(episode.average_ae);
      if (episode.success) ++summary.successes;
      if (slot_totals.size() < episode.records.size()) {
        slot_totals.resize(episode.records.size(), 0.0);
        slot_sources.resize(episode.records.size(), {0, 0, 0, 0});
      }
      for (std::size_t t = 0; t < episode.records.size(); ++t) {
        const auto& record = episode.records[t];
        slot_totals[t] += record.ae.mean();
        ++slot_sources[t][static_cast<std::size_t>(record.decision)];
        ++summary.source_counts[static_cast<std::size_t>(record.decision)];
      }
    }
    summary.success_probability = static_cast<double>(summary.successes) / static_cast<double>(episodes);
    double mean = 0.0;
    for (const auto a : averages) mean += a;
    mean /= static_cast<double>(episodes);
    double variance = 0.0;
    for (const auto a : averages) variance += (a - mean) * (a - mean);
    summary.mean_ae = mean;
    summary.std_ae = std::sqrt(variance / static_cast<double>(episodes));
    for (std::size_t t = 0; t < slot_totals.size(); ++t) {
      summary.per_slot_mean_ae.push_back(slot_totals[t] / static_cast<double>(episodes));
      const auto& counts = slot_sources[t];
      summary.per_slot_modal_source.push_back(
          static_cast<DecisionSource>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
    }
    report.strategies.push_back(std::move(summary));
  }
  return report;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : report.strategies) {
    nlohmann::json counts;
    for (std::size_t i = 0; i < 4; ++i) {
      counts[std::string(to_string(static_cast<DecisionSource>(i)))] = s.source_counts[i];
    }
    strategies.push_back({{"strategy", to_string(s.strategy)},
                          {"episodes", s.episodes},
                          {"successes", s.successes},
                          {"success_probability", s.success_probability},
                          {"mean_ae", s.mean_ae},
                          {"std_ae", s.std_ae},
                          {"decision_counts", counts},
                          {"per_slot_mean_ae", s.per_slot_mean_ae}});
  }
  return {{"config", report.config}, {"seeds", report.seeds}, {"strategies", strategies}};
}

void export_report(const ExperimentReport& report, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  std::ofstream json_out(directory / "report.json", std::ios::binary | std::ios::trunc);
  if (!json_out) throw SimulationError("cannot write " + (directory / "report.json").string());
  json_out << report_to_json(report).dump(2) << '\n';

  std::ofstream csv(directory / "per_slot.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw SimulationError("cannot write " + (directory / "per_slot.csv").string());
  csv << "slot,strategy,source_tag,mean_AE\n";
  for (const auto& s : report.strategies) {
    for (std::size_t t = 0; t < s.per_slot_mean_ae.size(); ++t) {
      csv << t << ',' << to_string(s.strategy) << ',' << to_string(s.per_slot_modal_source[t]) << ','
          << format_double(s.per_slot_mean_ae[t]) << '\n';
    }
  }
  if (!json_out || !csv) throw SimulationError("failed writing report files in " + directory.string());
}

void export_episode_csv(std::span<const EpisodeResult> episodes, const std::filesystem::path& path) {
  std::ofstream csv(path, std::ios::binary | std::ios::trunc);
  if (!csv) throw SimulationError("cannot write " + path.string());
  csv << "slot,strategy,source_tag,mean_AE,max_AE\n";
  for (const auto& episode : episodes) {
    for (const auto& r : episode.records) {
      csv << r.slot << ',' << to_string(episode.strategy) << ',' << to_string(r.decision) << ','
          << format_double(r.ae.mean()) << ',' << format_double(r.ae.maxCoeff()) << '\n';
    }
  }
  if (!csv) throw SimulationError("failed writing " + path.string());
}

}  // namespace tapsim
