#pragma once

#include "cola/lookahead.hpp"

#include <vector>

namespace cola {

/// Stationary policy trained on episodes drawn under the full dynamic
/// schedule. `make_env` is called with a placeholder mode and must build the
/// dynamic-schedule environment.
MetaTrainReport train_base_policy(const Policy& policy, const EnvFactory& make_env, TrainerConfig cfg,
                                  PolicyParams theta0);

/// theta + alpha * g(past) with segment-local returns to go (gamma = 1).
PolicyParams maml_adapt(const Policy& policy, const PolicyParams& theta, std::span<const Step> past, double alpha);

/// Uniform bins per observation feature; values outside [lo, hi] fall into
/// the edge bins.
class Bucketizer {
 public:
  struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int bins = 1;
  };

  Bucketizer() = default;
  explicit Bucketizer(std::vector<Axis> axes);

  /// Lane cue x heading x speed x visibility for LaneWorld observations.
  static Bucketizer lane_world_default();

  int bucket(const Observation& obs) const;
  int bucket_count() const;
  int dimension() const { return static_cast<int>(axes_.size()); }
  const std::vector<Axis>& axes() const { return axes_; }

 private:
  std::vector<Axis> axes_;
};

struct QTable {
  Bucketizer bucketizer;
  Matrix values;             // buckets x actions
  std::vector<int> visits;   // per bucket
  Mode mode;
  int episodes = 0;
  bool converged = false;

  int unvisited() const;
  /// Q(s, .) for an observation.
  Vector row(const Observation& obs) const;
  int greedy(const Observation& obs) const;
};

struct QLearningConfig {
  double learning_rate = 0.1;
  double gamma = 0.99;
  double epsilon = 0.1;
  int max_episodes = 2000;
  int min_episodes = 100;
  int plateau_window = 50;
  double plateau_tolerance = 1e-3;  // mean |dQ| per update, relative to 1 + mean |Q|
  double initial_value = 0.0;
  std::uint64_t seed = 11;
};

/// Tabular epsilon-greedy Q-learning on a fixed-mode environment.
QTable train_q_table(Environment& env, const Bucketizer& bucketizer, const QLearningConfig& cfg);

/// argmax_a sum_z b(z) Q_z(s, a), ties to the lowest index.
int q_mix_action(const Belief& belief, const std::vector<QTable>& tables, const Observation& obs);

/// Rolls M authentic K-step futures from a copy of `env` (true state and mode
/// sequence) under theta and applies the lookahead trust-region step to them.
LookaheadResult oracle_step(const Policy& policy, const PolicyParams& theta, const Environment& env,
                            const LookaheadConfig& cfg, Rng& rng);

/// Fixed-parameter episode.
EpisodeResult base_episode(const Policy& policy, const PolicyParams& theta, Environment& env, std::uint64_t seed,
                           std::uint64_t episode);

/// Adapts from the current parameters with the last K live steps after every step.
EpisodeResult maml_episode(const Policy& policy, const PolicyParams& theta0, Environment& env, int K, double alpha,
                           std::uint64_t seed, std::uint64_t episode);

/// Greedy belief-weighted Q-mixture with the same filtered belief as COLA.
EpisodeResult qmix_episode(const std::vector<QTable>& tables, const ModeClassifier& classifier,
                           const std::vector<Mode>& anchors, Environment& env, double likelihood_floor,
                           std::uint64_t seed, std::uint64_t episode);

/// Lookahead adaptation on authentic futures with privileged access to the simulator.
EpisodeResult oracle_episode(const Policy& policy, const PolicyParams& theta0, Environment& env,
                             const LookaheadConfig& cfg, std::uint64_t seed, std::uint64_t episode);

}  // namespace cola
