#include "cola/config.hpp"

#include "cola/io.hpp"

#include <json.hpp>

#include <set>
#include <stdexcept>
#include <type_traits>

namespace cola {

using json = nlohmann::json;

namespace {

// One visitor per struct drives both serialisation and parsing, so the key
// set cannot drift between the two directions.

template <class F>
void visit(LaneWorldConfig& c, F&& f) {
  f("dt", c.dt);
  f("accel_max", c.accel_max);
  f("drag", c.drag);
  f("steer_gain", c.steer_gain);
  f("max_speed", c.max_speed);
  f("lane_half_width", c.lane_half_width);
  f("line_fraction", c.line_fraction);
  f("slow_speed", c.slow_speed);
  f("puddle_friction", c.puddle_friction);
  f("curvature_persistence", c.curvature_persistence);
  f("curvature_sigma", c.curvature_sigma);
  f("curvature_limit", c.curvature_limit);
  f("slip_speed", c.slip_speed);
  f("slip_gain", c.slip_gain);
  f("heading_scale", c.heading_scale);
  f("noise_base", c.noise_base);
  f("noise_rain", c.noise_rain);
  f("visibility_noise", c.visibility_noise);
  f("excursion_penalty", c.excursion_penalty);
}

template <class F>
void visit(ScheduleConfig& c, F&& f) {
  f("delta_T", c.delta_T);
  f("horizon", c.horizon);
  f("gamma", c.gamma);
  f("W0", c.W0);
  f("sample_W0", c.sample_W0);
}

template <class F>
void visit(AnchorConfig& c, F&& f) {
  f("cloudy_W", c.cloudy_W);
  f("rainy_W", c.rainy_W);
  f("d", c.d);
}

template <class F>
void visit(PolicyConfig& c, F&& f) {
  f("family", c.family);
  f("hidden", c.hidden);
}

template <class F>
void visit(TrainerConfig& c, F&& f) {
  f("optimizer", c.optimizer);
  f("step_size", c.step_size);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_epsilon", c.adam_epsilon);
  f("episodes_per_mode", c.episodes_per_mode);
  f("max_iterations", c.max_iterations);
  f("min_iterations", c.min_iterations);
  f("plateau_window", c.plateau_window);
  f("plateau_tolerance", c.plateau_tolerance);
  f("gamma", c.gamma);
  f("use_baseline", c.use_baseline);
  f("max_grad_norm", c.max_grad_norm);
  f("bank_size", c.bank_size);
  f("seed", c.seed);
}

template <class F>
void visit(LikelihoodTrainConfig& c, F&& f) {
  f("ridge", c.ridge);
  f("max_newton_iterations", c.max_newton_iterations);
  f("tolerance", c.tolerance);
  f("holdout_fraction", c.holdout_fraction);
  f("seed", c.seed);
}

template <class F>
void visit(ClassifierConfig& c, F&& f) {
  f("fit", c.train);
  f("episodes", c.episodes);
  f("stride", c.stride);
  f("likelihood_floor", c.likelihood_floor);
}

template <class F>
void visit(TrustRegionConfig& c, F&& f) {
  f("delta", c.delta);
  f("cg_iterations", c.cg_iterations);
  f("cg_tolerance", c.cg_tolerance);
  f("damping", c.damping);
  f("step_mode", c.step_mode);
  f("fixed_step", c.fixed_step);
  f("fixed_step_fraction", c.fixed_step_fraction);
  f("max_backtracks", c.max_backtracks);
}

template <class F>
void visit(LookaheadConfig& c, F&& f) {
  f("K", c.K);
  f("M", c.M);
  f("gamma", c.gamma);
  f("leave_one_out_baseline", c.leave_one_out_baseline);
  f("expansion", c.expansion);
  f("trust_region", c.trust_region);
}

template <class F>
void visit(ColaConfig& c, F&& f) {
  f("lookahead", c.lookahead);
  f("use_filter", c.use_filter);
  f("log_drift", c.log_drift);
}

template <class F>
void visit(QLearningConfig& c, F&& f) {
  f("learning_rate", c.learning_rate);
  f("gamma", c.gamma);
  f("epsilon", c.epsilon);
  f("max_episodes", c.max_episodes);
  f("min_episodes", c.min_episodes);
  f("plateau_window", c.plateau_window);
  f("plateau_tolerance", c.plateau_tolerance);
  f("initial_value", c.initial_value);
  f("seed", c.seed);
}

template <class F>
void visit(BaselineConfig& c, F&& f) {
  f("maml_alpha", c.maml_alpha);
  f("q_learning", c.q);
  f("base_episodes_per_mode", c.base_episodes_per_mode);
}

template <class F>
void visit(ExperimentSettings& c, F&& f) {
  f("seeds", c.seeds);
  f("episodes", c.episodes);
  f("workers", c.workers);
  f("sweep_ks", c.sweep_ks);
  f("sweep_episodes", c.sweep_episodes);
  f("ablation_episodes", c.ablation_episodes);
  f("ablation_accuracy", c.ablation_accuracy);
  f("ablation_condition", c.ablation_condition);
  f("transfer_episodes", c.transfer_episodes);
  f("transfer_delta", c.transfer_delta);
  f("plots", c.plots);
}

template <class F>
void visit(ExperimentConfig& c, F&& f) {
  f("env", c.env);
  f("full_catalog", c.full_catalog);
  f("schedule", c.schedule);
  f("anchors", c.anchors);
  f("policy", c.policy);
  f("trainer", c.trainer);
  f("classifier", c.classifier);
  f("cola", c.cola);
  f("baselines", c.baselines);
  f("experiment", c.experiment);
}

template <class T>
concept Visitable = requires(T& t) { visit(t, [](const char*, auto&) {}); };

template <class T>
T parse_enum(const std::string& s);
template <>
StepMode parse_enum<StepMode>(const std::string& s) { return step_mode_from_string(s); }
template <>
Expansion parse_enum<Expansion>(const std::string& s) { return expansion_from_string(s); }
template <>
Optimizer parse_enum<Optimizer>(const std::string& s) { return optimizer_from_string(s); }
template <>
PolicyFamily parse_enum<PolicyFamily>(const std::string& s) { return policy_family_from_string(s); }

template <class T>
json encode(T& v);

struct Encoder {
  json& out;
  template <class T>
  void operator()(const char* key, T& v) {
    out[key] = encode(v);
  }
};

template <class T>
json encode(T& v) {
  if constexpr (Visitable<T>) {
    json j = json::object();
    visit(v, Encoder{j});
    return j;
  } else if constexpr (std::is_enum_v<T>) {
    return to_string(v);
  } else {
    return json(v);
  }
}

template <class T>
void decode(const json& j, T& v, const std::string& where);

struct Decoder {
  const json& in;
  std::string where;
  std::set<std::string> known;
  template <class T>
  void operator()(const char* key, T& v) {
    known.insert(key);
    if (in.contains(key)) decode(in.at(key), v, where + "." + key);
  }
};

template <class T>
void decode(const json& j, T& v, const std::string& where) {
  try {
    if constexpr (Visitable<T>) {
      if (!j.is_object()) throw std::invalid_argument("expected an object");
      Decoder d{j, where, {}};
      visit(v, d);
      for (const auto& item : j.items())
        if (!d.known.count(item.key())) throw std::invalid_argument("unknown key '" + item.key() + "'");
    } else if constexpr (std::is_enum_v<T>) {
      v = parse_enum<T>(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw std::invalid_argument("expected true or false");
      v = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (j.get<long long>() < 0) throw std::invalid_argument("expected a non-negative integer");
      v = j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw std::invalid_argument("expected a number");
      v = j.get<T>();
    } else {
      v = j.get<T>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument("config" + where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind("config", 0) == 0) throw;
    throw std::invalid_argument("config" + where + ": " + msg);
  }
}

}  // namespace

Policy PolicyConfig::make(int obs_dim, int actions) const {
  return family == PolicyFamily::kLinear ? Policy::linear(obs_dim, actions) : Policy::mlp(obs_dim, actions, hidden);
}

void ExperimentConfig::validate() const {
  LaneWorldConfig e = env;
  e.catalog = full_catalog ? full_action_catalog() : default_action_catalog();
  e.validate();
  schedule.validate();
  cola.lookahead.trust_region.validate();
  const auto& la = cola.lookahead;
  if (la.K < 1 || la.K > schedule.horizon) throw std::invalid_argument("cola.lookahead.K must lie in [1, horizon]");
  if (la.M < 1) throw std::invalid_argument("cola.lookahead.M must be positive");
  if (la.M > trainer.bank_size) throw std::invalid_argument("cola.lookahead.M exceeds trainer.bank_size");
  if (experiment.seeds.empty()) throw std::invalid_argument("experiment.seeds must not be empty");
  if (experiment.episodes < 1) throw std::invalid_argument("experiment.episodes must be positive");
  if (experiment.workers < 1) throw std::invalid_argument("experiment.workers must be positive");
  if (experiment.sweep_ks.empty()) throw std::invalid_argument("experiment.sweep_ks must not be empty");
  for (int k : experiment.sweep_ks)
    if (k < 1 || k > schedule.horizon) throw std::invalid_argument("experiment.sweep_ks entries must lie in [1, horizon]");
  if (!(experiment.ablation_accuracy > 0 && experiment.ablation_accuracy <= 1))
    throw std::invalid_argument("experiment.ablation_accuracy must lie in (0, 1]");
  if (classifier.episodes < 1 || classifier.stride < 1)
    throw std::invalid_argument("classifier.episodes and classifier.stride must be positive");
  if (experiment.ablation_condition != "fixed" && experiment.ablation_condition != "dynamic")
    throw std::invalid_argument("experiment.ablation_condition must be 'fixed' or 'dynamic'");
  if (policy.family == PolicyFamily::kMlp && policy.hidden < 1) throw std::invalid_argument("policy.hidden must be positive");
  if (trainer.episodes_per_mode < 1 || trainer.max_iterations < 1 || trainer.bank_size < 0)
    throw std::invalid_argument("trainer sizes must be positive");
  if (baselines.base_episodes_per_mode < 1) throw std::invalid_argument("baselines.base_episodes_per_mode must be positive");
}

std::string ExperimentConfig::to_json() const {
  ExperimentConfig copy = *this;
  return encode(copy).dump(2);
}

std::uint64_t ExperimentConfig::hash() const { return Fnv1a().add(to_json()).value(); }

std::unique_ptr<LaneWorld> ExperimentConfig::dynamic_env() const {
  LaneWorldConfig e = env;
  e.catalog = full_catalog ? full_action_catalog() : default_action_catalog();
  ScheduleConfig s = schedule;
  s.fixed_mode.reset();
  return std::make_unique<LaneWorld>(e, s);
}

std::unique_ptr<LaneWorld> ExperimentConfig::fixed_env(const Mode& m) const {
  LaneWorldConfig e = env;
  e.catalog = full_catalog ? full_action_catalog() : default_action_catalog();
  ScheduleConfig s = schedule;
  s.fixed_mode = m;
  return std::make_unique<LaneWorld>(e, s);
}

EnvFactory ExperimentConfig::fixed_factory() const {
  return [cfg = *this](const Mode& m) -> std::unique_ptr<Environment> { return cfg.fixed_env(m); };
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  decode(j, cfg, "");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(io::read_text(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace cola
