#pragma once

#include "cola/hmmdp.hpp"
#include "cola/policy.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cola {

std::uint64_t params_hash(const PolicyParams& theta);

/// Resets `env` and runs one episode under pi(.|.; theta).
Trajectory rollout(Environment& env, const Policy& policy, const PolicyParams& theta, Rng& env_rng, Rng& policy_rng);

/// Column-stacked observations of a step range.
ObservationBatch stack_observations(std::span<const Step> steps);

/// R^h = sum_{t >= h} gamma^{t-h} r_t over the given steps.
Vector returns_to_go(std::span<const Step> steps, double gamma = 1.0);
inline Vector returns_to_go(const Trajectory& traj, double gamma = 1.0) { return returns_to_go(traj.steps, gamma); }

/**
 * State-value baseline b(s, h) fitted by least squares on observation
 * features plus remaining-time features. Degenerate designs fall back to the
 * constant mean return.
 */
class ValueBaseline {
 public:
  ValueBaseline() = default;
  static ValueBaseline constant(double c);

  double operator()(const Vector& obs, int step_index, int horizon) const;
  /// Baseline values for every step of a trajectory.
  Vector evaluate(const Trajectory& traj) const;

  bool is_constant() const { return weights_.size() == 0; }
  double constant_value() const { return constant_; }
  const Vector& weights() const { return weights_; }

  static Vector features(const Vector& obs, int step_index, int horizon);

 private:
  friend ValueBaseline fit_baseline(const std::vector<Trajectory>& batch, double gamma);
  Vector weights_;
  double constant_ = 0.0;
};

ValueBaseline fit_baseline(const std::vector<Trajectory>& batch, double gamma = 1.0);

/// sum_h grad log pi(a_h|s_h; theta) (R^h - b_h). `baseline` may be empty
/// (no baseline) or hold one value per step.
Vector segment_gradient(const Policy& policy, std::span<const Step> steps, const PolicyParams& theta, double gamma,
                        const Vector& baseline = Vector());

Vector trajectory_gradient(const Policy& policy, const Trajectory& traj, const PolicyParams& theta,
                           double gamma = 1.0, const ValueBaseline* baseline = nullptr);

/// Mean of trajectory_gradient over a non-empty batch.
Vector mc_policy_gradient(const Policy& policy, const std::vector<Trajectory>& batch, const PolicyParams& theta,
                          double gamma = 1.0, const ValueBaseline* baseline = nullptr);

/// Meta-training rollouts per anchor mode, all generated by one policy.
struct TrajectoryBank {
  std::vector<Mode> anchors;
  std::vector<std::vector<Trajectory>> trajectories;  // indexed like anchors
  std::uint64_t policy_hash = 0;
  int horizon = 0;

  int mode_count() const { return static_cast<int>(anchors.size()); }
  int depth() const;  // smallest per-mode trajectory count
  void validate() const;
};

using EnvFactory = std::function<std::unique_ptr<Environment>(const Mode&)>;
using ModeSampler = std::function<std::vector<Mode>(int iteration, Rng& rng)>;

/// Sampler that returns the same mode batch every iteration.
ModeSampler fixed_modes(std::vector<Mode> modes);

enum class Optimizer { kSgd, kAdam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainerConfig {
  Optimizer optimizer = Optimizer::kAdam;
  double step_size = 0.03;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int episodes_per_mode = 16;
  int max_iterations = 300;
  int min_iterations = 300;  // equal to max: plateau stopping is opt-in
  int plateau_window = 10;
  double plateau_tolerance = 0.01;
  double gamma = 0.99;
  bool use_baseline = true;
  double max_grad_norm = 0.0;  // <= 0 disables clipping
  int bank_size = 32;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct MetaTrainReport {
  PolicyParams theta;
  std::vector<Mode> anchors;
  TrajectoryBank banks;
  std::vector<double> iteration_rewards;
  int iterations = 0;
  bool converged = false;
};

/**
 * Averaged policy-gradient ascent over mode batches:
 *   theta <- theta + alpha / |Z_k| sum_z grad J_z(theta, D_z)
 * with plain steps (kSgd) or Adam moment scaling of the averaged gradient.
 * Stops when the sliding-window mean reward changes by less than
 * `plateau_tolerance` (relative) or at `max_iterations`, then collects
 * `bank_size` fresh trajectories per mode of the final batch.
 */
MetaTrainReport meta_train(const Policy& policy, const EnvFactory& make_env, const ModeSampler& sample_modes,
                           const TrainerConfig& cfg, PolicyParams theta0);

/// Collects `count` trajectories per mode under theta (bank construction).
TrajectoryBank collect_bank(const Policy& policy, const EnvFactory& make_env, const std::vector<Mode>& modes,
                            const PolicyParams& theta, int count, std::uint64_t seed, int workers = 1);

}  // namespace cola
