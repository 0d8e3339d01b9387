#pragma once

#include "cola/baselines.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cola {

/// Anchor modes are given as weather values W with puddle translation d.
struct AnchorConfig {
  double cloudy_W = -20.0;
  double rainy_W = 60.0;
  double d = -10.0;

  std::vector<Mode> modes() const { return {mode_params(cloudy_W, d), mode_params(rainy_W, d)}; }
};

struct PolicyConfig {
  PolicyFamily family = PolicyFamily::kLinear;
  int hidden = 16;

  Policy make(int obs_dim, int actions) const;
};

struct ClassifierConfig {
  LikelihoodTrainConfig train;
  int episodes = 40;            // dynamic-schedule rollouts of the meta policy used as training frames
  int stride = 1;               // keep every stride-th frame
  double likelihood_floor = 1e-6;
};

struct BaselineConfig {
  double maml_alpha = 1e-4;
  QLearningConfig q;
  int base_episodes_per_mode = 32;  // per-iteration budget of the single-environment policy
};

struct ExperimentSettings {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int episodes = 100;        // per seed
  int workers = 1;
  std::vector<int> sweep_ks{5, 10, 20};
  int sweep_episodes = 30;   // per seed and condition
  int ablation_episodes = 500;
  double ablation_accuracy = 0.85;
  std::string ablation_condition = "fixed";  // fixed: anchors alternate by episode; dynamic: weather schedule
  int transfer_episodes = 100;
  double transfer_delta = 0.05;
  bool plots = true;
};

/// Everything a CLI run needs; loaded from JSON, every key optional.
struct ExperimentConfig {
  LaneWorldConfig env;
  bool full_catalog = false;
  ScheduleConfig schedule;
  AnchorConfig anchors;
  PolicyConfig policy;
  TrainerConfig trainer;
  ClassifierConfig classifier;
  ColaConfig cola;
  BaselineConfig baselines;
  ExperimentSettings experiment;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  /// Canonical JSON text (sorted keys); hashed into every CSV header.
  std::string to_json() const;
  std::uint64_t hash() const;

  /// Dynamic-schedule environment (W0 sampled per episode).
  std::unique_ptr<LaneWorld> dynamic_env() const;
  std::unique_ptr<LaneWorld> fixed_env(const Mode& m) const;
  EnvFactory fixed_factory() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace cola
