#pragma once

#include "cola/common.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cola {

/// Weather parameters acting as the hidden mode.
struct Mode {
  double cloudiness = 0.0;  // [0, 90]
  double rain = 0.0;        // [0, 80]
  double puddles = 0.0;     // [0, 75]

  Eigen::Vector3d vec() const { return {cloudiness, rain, puddles}; }
  bool operator==(const Mode&) const = default;
};

inline constexpr double kCloudinessMax = 90.0;
inline constexpr double kRainMax = 80.0;
inline constexpr double kPuddlesMax = 75.0;

/// Pose relative to the lane centre. Curvature is the road curvature under the
/// vehicle; it drifts stochastically and is never observed directly.
struct VehicleState {
  double lateral_offset = 0.0;  // m, positive to the right
  double heading = 0.0;         // rad, relative to the lane tangent
  double speed = 0.0;           // m/s
  double curvature = 0.0;       // 1/m
};

/// A [throttle/brake, steer] control pair.
struct Action {
  double throttle_brake = 0.0;
  double steer = 0.0;
  std::string name;
};

using ActionCatalog = std::vector<Action>;

/// Coast, forward, brake, and their left/right steering variants.
ActionCatalog default_action_catalog();
/// All eighteen rows of the discrete control table.
ActionCatalog full_action_catalog();
std::uint64_t catalog_hash(const ActionCatalog& catalog);
/// Index of `a` in the catalog; throws std::invalid_argument when absent.
int catalog_index(const ActionCatalog& catalog, const Action& a);

struct ScheduleConfig {
  int delta_T = 10;       // steps per weather update interval
  double W0 = 0.0;        // initial weather value; resampled at reset when sample_W0
  int horizon = 200;
  double gamma = 0.99;
  bool sample_W0 = true;
  std::optional<Mode> fixed_mode;  // stationary schedule when set

  /// Throws std::invalid_argument on a malformed configuration.
  void validate() const;
  int intervals() const { return horizon / delta_T; }
};

inline constexpr double kW0Min = -150.0;
inline constexpr double kW0Max = 100.0;

/// W for interval k.
double weather_schedule(int k, const ScheduleConfig& cfg);
/// Puddle translation: -10 while W is non-decreasing, 90 otherwise.
double translation_d(double W_curr, double W_next);
Mode mode_params(double W, double d);
/// Mode in effect at step t (0-based) of an episode.
Mode mode_at(int t, const ScheduleConfig& cfg);

/// Speed maintenance reward, peaking at 30 m/s.
double speed_reward(double V);
/// Terminal penalty for early termination and out-of-lane steps.
double collision_penalty(int t_term, int H, int N_out);
/// Terminal driving-too-slowly penalty, as printed (constant -0.25 for realistic counts).
double dts_penalty(long long N_slow);

struct LaneWorldConfig {
  double dt = 0.1;                 // s per step
  double accel_max = 20.0;         // m/s^2 at full throttle
  double drag = 0.5;               // 1/s
  double steer_gain = 0.02;        // rad/m per unit steer
  double max_speed = 40.0;         // m/s
  double lane_half_width = 1.75;   // m; exceeding it terminates the episode
  double line_fraction = 0.8;      // |offset| beyond this fraction of the half width counts as out of lane
  double slow_speed = 0.5;         // m/s
  double puddle_friction = 0.5;    // friction = 1 + puddle_friction * puddles / 75
  double curvature_persistence = 0.95;
  double curvature_sigma = 6e-4;   // 1/m per step
  double curvature_limit = 6e-3;   // 1/m
  double slip_speed = 0.0;         // m/s; puddle slip grows with speed above this
  double slip_gain = 0.01;         // lateral jitter std, m per (m/s) per step at full puddles
  double heading_scale = 0.1;      // rad per unit of the heading feature
  double noise_base = 0.01;        // feature noise std in clear weather
  double noise_rain = 0.3;         // additional std at full rain
  double visibility_noise = 2.0;   // extra std on the visibility feature in every mode
  double excursion_penalty = 100.0;  // per out-of-lane step, scaled by rain / kRainMax
  ActionCatalog catalog = default_action_catalog();

  double friction(const Mode& m) const { return 1.0 + puddle_friction * m.puddles / kPuddlesMax; }
  void validate() const;
};

/// Lane, heading, speed and lane-line visibility features.
inline constexpr int kObservationDim = 4;
using Observation = Vector;

/// Multiplicative attenuation of the lane-line cue.
double lane_visibility(const Mode& m);
double observation_noise(const LaneWorldConfig& cfg, const Mode& m);

/// One kinematic update; draws exactly two normal variates (road curvature, puddle slip).
VehicleState advance(const LaneWorldConfig& cfg, const VehicleState& s, const Action& a, const Mode& m, Rng& rng);
/// Mode-corrupted observation; draws exactly kObservationDim + 1 normal variates.
Observation observe(const LaneWorldConfig& cfg, const VehicleState& s, const Mode& m, Rng& rng);

struct StepOutcome {
  Observation obs;
  double reward = 0.0;
  bool done = false;
};

struct EpisodeStats {
  int t = 0;
  int out_of_lane = 0;
  long long slow = 0;
  double terminal_reward = 0.0;
};

/// Episodic environment with discrete actions. Copies via clone() are fully
/// independent; randomness always comes from the generator passed in.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset(Rng& rng) = 0;
  virtual StepOutcome step(int action, Rng& rng) = 0;
  virtual Observation observation() const = 0;
  virtual int horizon() const = 0;
  virtual int action_count() const = 0;
  virtual int observation_dim() const = 0;
  virtual int time() const = 0;
  virtual bool done() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
  virtual VehicleState vehicle_state() const { return {}; }
  virtual Mode mode() const { return {}; }
  virtual EpisodeStats stats() const { return {time(), 0, 0, 0.0}; }
};

class LaneWorld final : public Environment {
 public:
  LaneWorld(LaneWorldConfig cfg, ScheduleConfig schedule);

  Observation reset(Rng& rng) override;
  /// Resets with W0 pinned, regardless of schedule.sample_W0.
  Observation reset_with(double W0, Rng& rng);
  StepOutcome step(int action, Rng& rng) override;
  StepOutcome step(const Action& action, Rng& rng);

  Observation observation() const override { return obs_; }
  int horizon() const override { return schedule_.horizon; }
  int action_count() const override { return static_cast<int>(cfg_.catalog.size()); }
  int observation_dim() const override { return kObservationDim; }
  int time() const override { return t_; }
  bool done() const override { return done_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<LaneWorld>(*this); }
  VehicleState vehicle_state() const override { return state_; }
  Mode mode() const override { return mode_; }
  EpisodeStats stats() const override { return {t_, n_out_, n_slow_, terminal_reward_}; }

  const LaneWorldConfig& config() const { return cfg_; }
  const ScheduleConfig& schedule() const { return schedule_; }

  /// Places the vehicle in a given state (testing and what-if rollouts).
  void set_vehicle_state(const VehicleState& s) { state_ = s; }

 private:
  LaneWorldConfig cfg_;
  ScheduleConfig schedule_;
  VehicleState state_;
  Mode mode_;
  Observation obs_;
  int t_ = 0;
  int n_out_ = 0;
  long long n_slow_ = 0;
  bool prev_slow_ = false;
  bool done_ = false;
  double terminal_reward_ = 0.0;
};

/// One recorded transition: observation s_t, action a_t, reward r_t.
struct Step {
  Observation obs;
  int action = 0;
  double reward = 0.0;
  VehicleState state;
  Mode mode;
};

struct Trajectory {
  std::vector<Step> steps;
  int terminal_time = 0;
  int out_of_lane_count = 0;
  long long slow_count = 0;
  double terminal_reward = 0.0;  // already included in the final step's reward
  int horizon = 0;

  int size() const { return static_cast<int>(steps.size()); }
  bool empty() const { return steps.empty(); }
  double total_reward() const;
  double mean_speed() const;
  std::vector<Mode> mode_trace() const;
  /// Per-step rewards padded with zeros to `length`.
  Vector reward_series(int length) const;
};

}  // namespace cola
