// SPDX-License-Identifier: Apache-2.0
#include "tapsim/scenario.hpp"

#include <fstream>
#include <set>

namespace tapsim {

using nlohmann::json;

namespace {

std::string type_name(const json& value) {
  if (value.is_number_unsigned()) return "unsigned integer";
  if (value.is_number_integer()) return "integer";
  return value.type_name();
}

// Typed, path-aware access to one JSON object. Every key read is recorded so
// leftovers can be reported as unknown fields.
class Section {
 public:
  Section(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) {
      throw ConfigError("field '" + path_ + "' expected object, got " + type_name(value_));
    }
  }

  ~Section() = default;
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  bool has(const std::string& key) {
    seen_.insert(key);
    return value_.contains(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& get(const std::string& key, const char* expected) {
    if (!has(key)) throw ConfigError("missing field '" + field(key) + "' (expected " + expected + ")");
    return value_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = value_.at(key);
    if (!v.is_number()) throw ConfigError("field '" + field(key) + "' expected number, got " + type_name(v));
    out = v.get<double>();
  }

  template <typename Unsigned>
  void count(const std::string& key, Unsigned& out) {
    if (!has(key)) return;
    out = static_cast<Unsigned>(as_unsigned(value_.at(key), field(key)));
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = value_.at(key);
    if (!v.is_boolean()) throw ConfigError("field '" + field(key) + "' expected boolean, got " + type_name(v));
    out = v.get<bool>();
  }

  bool string(const std::string& key, std::string& out) {
    if (!has(key)) return false;
    const auto& v = value_.at(key);
    if (!v.is_string()) throw ConfigError("field '" + field(key) + "' expected string, got " + type_name(v));
    out = v.get<std::string>();
    return true;
  }

  std::string required_string(const std::string& key) {
    const auto& v = get(key, "string");
    if (!v.is_string()) throw ConfigError("field '" + field(key) + "' expected string, got " + type_name(v));
    return v.get<std::string>();
  }

  const json& array(const std::string& key) {
    const auto& v = value_.at(key);
    if (!v.is_array()) throw ConfigError("field '" + field(key) + "' expected array, got " + type_name(v));
    return v;
  }

  void reject_unknown() const {
    for (const auto& item : value_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown field '" + field(item.key()) + "'");
    }
  }

  static std::uint64_t as_unsigned(const json& v, const std::string& name) {
    // Documents built in code hold non-negative integers as signed values.
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError("field '" + name + "' expected unsigned integer, got " + type_name(v));
    }
    return v.get<std::uint64_t>();
  }

 private:
  const json& value_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::string& field,
                const std::pair<const char*, Enum> (&options)[N]) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw ConfigError("field '" + field + "' expected one of " + allowed + ", got '" + text + "'");
}

template <typename Enum, std::size_t N>
const char* enum_name(Enum value, const std::pair<const char*, Enum> (&options)[N]) {
  for (const auto& [name, v] : options) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<const char*, ChannelMode> kModes[] = {
    {"stochastic", ChannelMode::Stochastic}, {"periodic", ChannelMode::Periodic}, {"composite", ChannelMode::Composite}};
constexpr std::pair<const char*, LatePolicy> kLatePolicies[] = {{"history", LatePolicy::History},
                                                                {"drop", LatePolicy::Drop}};
constexpr std::pair<const char*, ModePolicy> kModePolicies[] = {{"offline", ModePolicy::Offline},
                                                                {"online", ModePolicy::Online}};
constexpr std::pair<const char*, DataSource> kSources[] = {{"synthetic", DataSource::Synthetic},
                                                           {"trace", DataSource::Trace}};
constexpr std::pair<const char*, SyntheticKind> kKinds[] = {{"minimum_jerk", SyntheticKind::MinimumJerk},
                                                            {"sinusoid_mixture", SyntheticKind::SinusoidMixture},
                                                            {"constant_velocity", SyntheticKind::ConstantVelocity}};
constexpr std::pair<const char*, Strategy> kStrategies[] = {{"non_predictive", Strategy::NonPredictive},
                                                            {"single_predictive", Strategy::SinglePredictive},
                                                            {"tap", Strategy::Tap}};

SyntheticSpec parse_synthetic(const json& value, const std::string& path, double sample_rate_hz) {
  Section s(value, path);
  SyntheticSpec spec;
  spec.sample_rate_hz = sample_rate_hz;
  spec.kind = parse_enum(s.required_string("kind"), s.field("kind"), kKinds);
  s.count("dof_count", spec.dof_count);
  s.count("duration_slots", spec.duration_slots);
  s.count("signals_per_dof", spec.signals_per_dof);
  s.count("seed", spec.seed);
  s.count("min_segment_slots", spec.min_segment_slots);
  s.count("max_segment_slots", spec.max_segment_slots);
  s.count("component_count", spec.component_count);
  s.number("max_amplitude", spec.max_amplitude);
  s.number("offset", spec.offset);
  s.number("max_frequency_hz", spec.max_frequency_hz);
  s.number("speed_per_slot", spec.speed_per_slot);
  s.count("cycle_waypoints", spec.cycle_waypoints);
  s.count("task_seed", spec.task_seed);
  if (s.has("waypoints")) {
    const auto& list = s.array("waypoints");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section w(list[i], s.field("waypoints") + "[" + std::to_string(i) + "]");
      Waypoint waypoint;
      waypoint.slot = Section::as_unsigned(w.get("slot", "unsigned integer"), w.field("slot"));
      const auto& values = w.get("values", "array of numbers");
      if (!values.is_array()) throw ConfigError("field '" + w.field("values") + "' expected array");
      for (const auto& v : values) {
        if (!v.is_number()) throw ConfigError("field '" + w.field("values") + "' expected array of numbers");
        waypoint.values.push_back(v.get<double>());
      }
      w.reject_unknown();
      spec.waypoints.push_back(std::move(waypoint));
    }
  }
  if (s.has("components")) {
    const auto& list = s.array("components");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section c(list[i], s.field("components") + "[" + std::to_string(i) + "]");
      SinusoidComponent component;
      c.number("amplitude", component.amplitude);
      c.number("frequency_hz", component.frequency_hz);
      c.number("phase", component.phase);
      c.reject_unknown();
      spec.components.push_back(component);
    }
  }
  s.reject_unknown();
  return spec;
}

DataConfig parse_data(const json& value) {
  Section s(value, "data");
  DataConfig data;
  data.source = parse_enum(s.required_string("source"), "data.source", kSources);
  s.number("sample_rate_hz", data.sample_rate_hz);
  s.count("signals_per_dof", data.signals_per_dof);
  s.number("train_fraction", data.train_fraction);
  s.boolean("vary_per_episode", data.vary_per_episode);
  s.count("training_traces", data.training_traces);
  std::string trace;
  if (s.string("trace_path", trace)) data.trace_path = trace;
  if (data.source == DataSource::Synthetic) {
    data.synthetic = parse_synthetic(s.get("synthetic", "object"), "data.synthetic", data.sample_rate_hz);
  } else {
    if (data.trace_path.empty()) throw ConfigError("missing field 'data.trace_path' (expected string)");
    if (s.has("synthetic")) throw ConfigError("field 'data.synthetic' is only valid for source 'synthetic'");
  }
  s.reject_unknown();
  return data;
}

ChannelConfig parse_channel(const json& value) {
  Section s(value, "channel");
  ChannelConfig channel;
  channel.mode = parse_enum(s.required_string("mode"), "channel.mode", kModes);
  s.number("latency_mean_ms", channel.latency_mean_ms);
  s.number("latency_std_ms", channel.latency_std_ms);
  s.number("loss_prob", channel.loss_prob);
  s.count("period_k", channel.period_k);
  s.number("slot_duration_ms", channel.slot_duration_ms);
  s.count("deadline_slots", channel.deadline_slots);
  std::string late;
  if (s.string("late_policy", late)) channel.late_policy = parse_enum(late, "channel.late_policy", kLatePolicies);
  s.reject_unknown();
  try {
    channel.validate();
  } catch (const ChannelError& e) {
    throw ConfigError(std::string("channel: ") + e.what());
  }
  return channel;
}

EngineConfig parse_engine(const json& value) {
  Section s(value, "engine");
  EngineConfig engine;
  s.count("lookback", engine.lookback);
  s.count("horizon", engine.horizon);
  s.number("sample_rate_hz", engine.sample_rate_hz);
  s.number("transmit_rate_hz", engine.transmit_rate_hz);
  s.boolean("bundling", engine.bundling);
  std::string policy;
  if (s.string("mode_policy", policy)) engine.mode_policy = parse_enum(policy, "engine.mode_policy", kModePolicies);
  s.count("ar_order", engine.ar_order);
  s.number("ar_ridge", engine.ar_ridge);
  s.count("history_capacity", engine.history_capacity);
  s.reject_unknown();
  try {
    engine.validate();
  } catch (const EngineError& e) {
    throw ConfigError(std::string("engine: ") + e.what());
  }
  return engine;
}

ExperimentConfig parse_experiment(const json& value) {
  Section s(value, "experiment");
  ExperimentConfig experiment;
  s.count("episodes", experiment.episodes);
  s.count("base_seed", experiment.base_seed);
  s.number("success_tolerance", experiment.success_tolerance);
  s.count("dwell_slots", experiment.dwell_slots);
  s.count("slot_budget", experiment.slot_budget);
  if (s.has("waypoints")) {
    for (const auto& v : s.array("waypoints")) {
      experiment.waypoints.push_back(Section::as_unsigned(v, "experiment.waypoints[]"));
    }
  }
  s.reject_unknown();
  if (experiment.episodes < 1) throw ConfigError("field 'experiment.episodes' must be >= 1");
  if (!(experiment.success_tolerance > 0.0)) throw ConfigError("field 'experiment.success_tolerance' must be > 0");
  if (experiment.dwell_slots < 1) throw ConfigError("field 'experiment.dwell_slots' must be >= 1");
  return experiment;
}

TrainingConfig parse_training(const json& value) {
  Section s(value, "training");
  TrainingConfig training;
  s.count("layers", training.layers);
  s.count("hidden", training.hidden);
  s.count("init_seed", training.init_seed);
  s.count("steps", training.schedule.steps);
  s.count("batch_size", training.schedule.batch_size);
  s.count("eval_every", training.schedule.eval_every);
  s.count("seed", training.schedule.seed);
  s.number("learning_rate", training.adam.learning_rate);
  s.number("clip_norm", training.adam.clip_norm);
  s.count("buffer_capacity", training.buffer_capacity);
  s.count("steps_per_slot", training.steps_per_slot);
  s.count("min_buffer", training.min_buffer);
  s.count("max_online_steps", training.max_online_steps);
  std::string weights;
  if (s.string("weights", weights)) training.weights = weights;
  s.reject_unknown();
  if (training.layers < 1 || training.hidden < 1) throw ConfigError("field 'training.layers'/'training.hidden' must be >= 1");
  return training;
}

}  // namespace

Strategy parse_strategy(const std::string& name) { return parse_enum(name, "strategies[]", kStrategies); }

ScenarioConfig parse_scenario(const json& document) {
  Section root(document, "");
  ScenarioConfig config;
  config.data = parse_data(root.get("data", "object"));
  config.channel = parse_channel(root.get("channel", "object"));
  config.engine = parse_engine(root.get("engine", "object"));
  const auto& strategies = root.get("strategies", "array of strategy names");
  if (!strategies.is_array() || strategies.empty()) {
    throw ConfigError("field 'strategies' expected non-empty array of strategy names");
  }
  config.strategies.clear();
  for (const auto& s : strategies) {
    if (!s.is_string()) throw ConfigError("field 'strategies[]' expected string, got " + type_name(s));
    config.strategies.push_back(parse_strategy(s.get<std::string>()));
  }
  config.experiment = parse_experiment(root.get("experiment", "object"));
  if (root.has("training")) config.training = parse_training(document.at("training"));
  root.reject_unknown();
  return config;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json document;
  try {
    in >> document;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  auto config = parse_scenario(document);
  if (config.data.source == DataSource::Trace && config.data.trace_path.is_relative()) {
    config.data.trace_path = path.parent_path() / config.data.trace_path;
  }
  if (!config.training.weights.empty() && config.training.weights.is_relative()) {
    config.training.weights = path.parent_path() / config.training.weights;
  }
  return config;
}

json to_json(const ScenarioConfig& config) {
  json data = {{"source", enum_name(config.data.source, kSources)},
               {"sample_rate_hz", config.data.sample_rate_hz},
               {"signals_per_dof", config.data.signals_per_dof},
               {"train_fraction", config.data.train_fraction},
               {"vary_per_episode", config.data.vary_per_episode},
               {"training_traces", config.data.training_traces}};
  if (config.data.source == DataSource::Trace) {
    data["trace_path"] = config.data.trace_path.generic_string();
  } else {
    const auto& syn = config.data.synthetic;
    json synthetic = {{"kind", enum_name(syn.kind, kKinds)},
                      {"dof_count", syn.dof_count},
                      {"duration_slots", syn.duration_slots},
                      {"signals_per_dof", syn.signals_per_dof},
                      {"seed", syn.seed},
                      {"min_segment_slots", syn.min_segment_slots},
                      {"max_segment_slots", syn.max_segment_slots},
                      {"component_count", syn.component_count},
                      {"max_amplitude", syn.max_amplitude},
                      {"offset", syn.offset},
                      {"max_frequency_hz", syn.max_frequency_hz},
                      {"speed_per_slot", syn.speed_per_slot},
                      {"cycle_waypoints", syn.cycle_waypoints},
                      {"task_seed", syn.task_seed}};
    if (!syn.waypoints.empty()) {
      json list = json::array();
      for (const auto& w : syn.waypoints) list.push_back({{"slot", w.slot}, {"values", w.values}});
      synthetic["waypoints"] = list;
    }
    if (!syn.components.empty()) {
      json list = json::array();
      for (const auto& c : syn.components) {
        list.push_back({{"amplitude", c.amplitude}, {"frequency_hz", c.frequency_hz}, {"phase", c.phase}});
      }
      synthetic["components"] = list;
    }
    data["synthetic"] = synthetic;
  }

  const auto& ch = config.channel;
  json channel = {{"mode", enum_name(ch.mode, kModes)},
                  {"latency_mean_ms", ch.latency_mean_ms},
                  {"latency_std_ms", ch.latency_std_ms},
                  {"loss_prob", ch.loss_prob},
                  {"period_k", ch.period_k},
                  {"slot_duration_ms", ch.slot_duration_ms},
                  {"deadline_slots", ch.deadline_slots},
                  {"late_policy", enum_name(ch.late_policy, kLatePolicies)}};

  const auto& en = config.engine;
  json engine = {{"lookback", en.lookback},
                 {"horizon", en.horizon},
                 {"sample_rate_hz", en.sample_rate_hz},
                 {"transmit_rate_hz", en.transmit_rate_hz},
                 {"bundling", en.bundling},
                 {"mode_policy", enum_name(en.mode_policy, kModePolicies)},
                 {"ar_order", en.ar_order},
                 {"ar_ridge", en.ar_ridge},
                 {"history_capacity", en.history_capacity}};

  json strategies = json::array();
  for (auto s : config.strategies) strategies.push_back(enum_name(s, kStrategies));

  const auto& ex = config.experiment;
  json experiment = {{"episodes", ex.episodes},
                     {"base_seed", ex.base_seed},
                     {"success_tolerance", ex.success_tolerance},
                     {"dwell_slots", ex.dwell_slots},
                     {"waypoints", ex.waypoints},
                     {"slot_budget", ex.slot_budget}};

  const auto& tr = config.training;
  json training = {{"layers", tr.layers},
                   {"hidden", tr.hidden},
                   {"init_seed", tr.init_seed},
                   {"steps", tr.schedule.steps},
                   {"batch_size", tr.schedule.batch_size},
                   {"eval_every", tr.schedule.eval_every},
                   {"seed", tr.schedule.seed},
                   {"learning_rate", tr.adam.learning_rate},
                   {"clip_norm", tr.adam.clip_norm},
                   {"buffer_capacity", tr.buffer_capacity},
                   {"steps_per_slot", tr.steps_per_slot},
                   {"min_buffer", tr.min_buffer},
                   {"max_online_steps", tr.max_online_steps}};
  if (!tr.weights.empty()) training["weights"] = tr.weights.generic_string();

  return {{"data", data},         {"channel", channel},       {"engine", engine},
          {"strategies", strategies}, {"experiment", experiment}, {"training", training}};
}

}  // namespace tapsim
