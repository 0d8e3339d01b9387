#include "cola/hmmdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cola {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ActionCatalog full_action_catalog() {
  return {
      {0.0, 0.0, "coast"},
      {0.0, -0.5, "turn_left"},
      {0.0, 0.5, "turn_right"},
      {1.0, 0.0, "forward"},
      {-0.5, 0.0, "brake"},
      {0.5, -0.5, "forward_left"},
      {0.5, 0.5, "forward_right"},
      {-0.5, -0.5, "brake_left"},
      {-0.5, 0.5, "brake_right"},
      {0.5, 0.0, "bear_forward"},
      {0.75, 1.0, "sharp_right"},
      {0.75, -1.0, "sharp_left"},
      {-0.5, 1.0, "brake_sharp_right"},
      {-0.5, -1.0, "brake_sharp_left"},
      {0.5, 0.75, "forward_inferior_sharp_right"},
      {0.5, -0.75, "forward_inferior_sharp_left"},
      {0.75, 0.0, "accelerate_forward"},
      {-1.0, 0.0, "emergency_brake"},
  };
}

ActionCatalog default_action_catalog() {
  auto full = full_action_catalog();
  return {full[0], full[3], full[4], full[1], full[2], full[5], full[6], full[7], full[8]};
}

std::uint64_t catalog_hash(const ActionCatalog& catalog) {
  Fnv1a h;
  for (const auto& a : catalog) h.add(a.throttle_brake).add(a.steer);
  return h.value();
}

int catalog_index(const ActionCatalog& catalog, const Action& a) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].throttle_brake == a.throttle_brake && catalog[i].steer == a.steer) return static_cast<int>(i);
  }
  throw std::invalid_argument("action [" + std::to_string(a.throttle_brake) + ", " + std::to_string(a.steer) +
                              "] is not in the action catalog");
}

void ScheduleConfig::validate() const {
  if (delta_T <= 0) throw std::invalid_argument("delta_T must be positive");
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (horizon % delta_T != 0) throw std::invalid_argument("horizon must be a multiple of delta_T");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
}

double weather_schedule(int k, const ScheduleConfig& cfg) {
  if (k <= 0) return cfg.W0;
  const double x = 1.3 * k * cfg.delta_T + cfg.W0;
  double m = std::fmod(x, 250.0);
  if (m < 0.0) m += 250.0;
  return 25.0 / 12.0 * std::abs(m - 125.0) - 150.0;
}

double translation_d(double W_curr, double W_next) { return W_next >= W_curr ? -10.0 : 90.0; }

Mode mode_params(double W, double d) {
  return {std::clamp(W + 40.0, 0.0, kCloudinessMax), std::clamp(W, 0.0, kRainMax), std::clamp(W + d, 0.0, kPuddlesMax)};
}

Mode mode_at(int t, const ScheduleConfig& cfg) {
  if (cfg.fixed_mode) return *cfg.fixed_mode;
  const int k = t / cfg.delta_T;
  const double w = weather_schedule(k, cfg);
  return mode_params(w, translation_d(w, weather_schedule(k + 1, cfg)));
}

double speed_reward(double V) {
  if (V < 0.0) return -0.005;
  if (V <= 30.0) return V * V / 9.0;
  if (V <= 50.0) return 5.0 * (50.0 - V);
  return -2.0 * (V - 50.0) * (V - 50.0);
}

double collision_penalty(int t_term, int H, int N_out) {
  const double completed = t_term == H ? 100.0 : 0.0;
  return -100.0 + static_cast<double>(t_term - H) + completed - 0.1 * N_out;
}

double dts_penalty(long long N_slow) { return -0.005 * std::max(50.0, 1e-7 * static_cast<double>(N_slow)); }

void LaneWorldConfig::validate() const {
  if (dt <= 0 || accel_max <= 0 || drag < 0 || max_speed <= 0 || lane_half_width <= 0)
    throw std::invalid_argument("LaneWorld physical constants must be positive");
  if (!(line_fraction > 0 && line_fraction <= 1)) throw std::invalid_argument("line_fraction must lie in (0, 1]");
  if (catalog.empty()) throw std::invalid_argument("action catalog is empty");
  if (slip_gain < 0 || slip_speed < 0 || curvature_sigma < 0 || noise_base < 0 || noise_rain < 0 ||
      visibility_noise < 0 || excursion_penalty < 0)
    throw std::invalid_argument("LaneWorld noise constants must be non-negative");
}

double lane_visibility(const Mode& m) { return (1.0 - m.puddles / 150.0) * (1.0 - m.cloudiness / 180.0); }

double observation_noise(const LaneWorldConfig& cfg, const Mode& m) {
  return cfg.noise_base + cfg.noise_rain * m.rain / kRainMax;
}

VehicleState advance(const LaneWorldConfig& cfg, const VehicleState& s, const Action& a, const Mode& m, Rng& rng) {
  std::normal_distribution<double> normal;
  VehicleState n;
  n.speed = std::clamp(s.speed + cfg.accel_max * a.throttle_brake * cfg.dt - cfg.drag * s.speed * cfg.dt * cfg.friction(m),
                       0.0, cfg.max_speed);
  const double slip = cfg.slip_gain * (m.puddles / kPuddlesMax) * std::max(0.0, s.speed - cfg.slip_speed);
  n.heading = s.heading + (cfg.steer_gain * a.steer - s.curvature) * s.speed * cfg.dt;
  n.lateral_offset = s.lateral_offset + s.speed * std::sin(s.heading) * cfg.dt + slip * normal(rng);
  n.curvature = std::clamp(cfg.curvature_persistence * s.curvature + cfg.curvature_sigma * normal(rng),
                           -cfg.curvature_limit, cfg.curvature_limit);
  return n;
}

Observation observe(const LaneWorldConfig& cfg, const VehicleState& s, const Mode& m, Rng& rng) {
  std::normal_distribution<double> normal;
  const double vis = lane_visibility(m);
  const double sigma = observation_noise(cfg, m);
  Observation o(kObservationDim);
  o << vis * s.lateral_offset / cfg.lane_half_width, s.heading / cfg.heading_scale, s.speed / cfg.max_speed, vis;
  for (int i = 0; i < kObservationDim; ++i) o[i] += sigma * normal(rng);
  o[kObservationDim - 1] += cfg.visibility_noise * normal(rng);
  return o;
}

LaneWorld::LaneWorld(LaneWorldConfig cfg, ScheduleConfig schedule) : cfg_(std::move(cfg)), schedule_(schedule) {
  cfg_.validate();
  schedule_.validate();
}

Observation LaneWorld::reset(Rng& rng) {
  std::uniform_real_distribution<double> w0(kW0Min, kW0Max);
  const double sampled = w0(rng);
  return reset_with(schedule_.sample_W0 ? sampled : schedule_.W0, rng);
}

Observation LaneWorld::reset_with(double W0, Rng& rng) {
  std::normal_distribution<double> normal;
  schedule_.W0 = W0;
  const double stationary_sd =
      cfg_.curvature_sigma / std::sqrt(std::max(1e-12, 1.0 - cfg_.curvature_persistence * cfg_.curvature_persistence));
  state_ = VehicleState{};
  state_.curvature = std::clamp(stationary_sd * normal(rng), -cfg_.curvature_limit, cfg_.curvature_limit);
  t_ = 0;
  n_out_ = 0;
  n_slow_ = 0;
  prev_slow_ = state_.speed < cfg_.slow_speed;
  done_ = false;
  terminal_reward_ = 0.0;
  mode_ = mode_at(0, schedule_);
  obs_ = observe(cfg_, state_, mode_, rng);
  return obs_;
}

StepOutcome LaneWorld::step(int action, Rng& rng) {
  if (action < 0 || action >= action_count())
    throw std::out_of_range("action index " + std::to_string(action) + " outside the catalog");
  if (done_) throw std::logic_error("step() called on a finished episode");

  state_ = advance(cfg_, state_, cfg_.catalog[static_cast<std::size_t>(action)], mode_, rng);
  ++t_;

  const bool slow = state_.speed < cfg_.slow_speed;
  if (slow && prev_slow_) ++n_slow_;
  prev_slow_ = slow;
  const double abs_offset = std::abs(state_.lateral_offset);
  if (abs_offset > cfg_.line_fraction * cfg_.lane_half_width) ++n_out_;

  StepOutcome out;
  out.reward = speed_reward(state_.speed);
  if (abs_offset > cfg_.line_fraction * cfg_.lane_half_width)
    out.reward -= cfg_.excursion_penalty * mode_.rain / kRainMax;
  const bool crashed = abs_offset > cfg_.lane_half_width;
  done_ = crashed || t_ >= schedule_.horizon;
  if (done_) {
    terminal_reward_ = collision_penalty(t_, schedule_.horizon, n_out_) + dts_penalty(n_slow_);
    out.reward += terminal_reward_;
  } else {
    mode_ = mode_at(t_, schedule_);
  }
  obs_ = observe(cfg_, state_, mode_, rng);
  out.obs = obs_;
  out.done = done_;
  return out;
}

StepOutcome LaneWorld::step(const Action& action, Rng& rng) { return step(catalog_index(cfg_.catalog, action), rng); }

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

double Trajectory::mean_speed() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.state.speed;
  return s / static_cast<double>(steps.size());
}

std::vector<Mode> Trajectory::mode_trace() const {
  std::vector<Mode> out;
  out.reserve(steps.size());
  for (const auto& st : steps) out.push_back(st.mode);
  return out;
}

Vector Trajectory::reward_series(int length) const {
  Vector r = Vector::Zero(length);
  for (int i = 0; i < std::min(length, size()); ++i) r[i] = steps[static_cast<std::size_t>(i)].reward;
  return r;
}

}  // namespace cola
