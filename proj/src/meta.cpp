#include "cola/meta.hpp"

#include "cola/parallel.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cola {

std::uint64_t params_hash(const PolicyParams& theta) { return Fnv1a().add(theta).value(); }

Trajectory rollout(Environment& env, const Policy& policy, const PolicyParams& theta, Rng& env_rng, Rng& policy_rng) {
  Trajectory traj;
  traj.horizon = env.horizon();
  traj.steps.reserve(static_cast<std::size_t>(env.horizon()));
  Observation obs = env.reset(env_rng);
  while (!env.done()) {
    Step st;
    st.obs = obs;
    st.state = env.vehicle_state();
    st.mode = env.mode();
    st.action = sample_action(policy, theta, obs, policy_rng);
    const StepOutcome out = env.step(st.action, env_rng);
    st.reward = out.reward;
    traj.steps.push_back(std::move(st));
    obs = out.obs;
  }
  const EpisodeStats stats = env.stats();
  traj.terminal_time = stats.t;
  traj.out_of_lane_count = stats.out_of_lane;
  traj.slow_count = stats.slow;
  traj.terminal_reward = stats.terminal_reward;
  return traj;
}

ObservationBatch stack_observations(std::span<const Step> steps) {
  if (steps.empty()) return ObservationBatch();
  ObservationBatch x(steps.front().obs.size(), static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = steps[i].obs;
  return x;
}

Vector returns_to_go(std::span<const Step> steps, double gamma) {
  const auto n = static_cast<Eigen::Index>(steps.size());
  Vector r(n);
  double acc = 0.0;
  for (Eigen::Index h = n - 1; h >= 0; --h) {
    acc = steps[static_cast<std::size_t>(h)].reward + gamma * acc;
    r[h] = acc;
  }
  return r;
}

ValueBaseline ValueBaseline::constant(double c) {
  ValueBaseline b;
  b.constant_ = c;
  return b;
}

Vector ValueBaseline::features(const Vector& obs, int step_index, int horizon) {
  const double ttg = horizon > 0 ? static_cast<double>(horizon - step_index) / horizon : 0.0;
  Vector f(obs.size() + 3);
  f << obs, 1.0, ttg, ttg * ttg;
  return f;
}

double ValueBaseline::operator()(const Vector& obs, int step_index, int horizon) const {
  if (is_constant()) return constant_;
  return features(obs, step_index, horizon).dot(weights_);
}

Vector ValueBaseline::evaluate(const Trajectory& traj) const {
  Vector b(traj.size());
  const int horizon = traj.horizon > 0 ? traj.horizon : traj.size();
  for (int h = 0; h < traj.size(); ++h) b[h] = (*this)(traj.steps[static_cast<std::size_t>(h)].obs, h, horizon);
  return b;
}

ValueBaseline fit_baseline(const std::vector<Trajectory>& batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("fit_baseline: empty batch");
  Eigen::Index rows = 0;
  for (const auto& t : batch) rows += t.size();
  if (rows == 0) throw std::invalid_argument("fit_baseline: batch has no steps");
  const auto cols = batch.front().steps.front().obs.size() + 3;
  Matrix design(rows, cols);
  Vector target(rows);
  Eigen::Index r = 0;
  for (const auto& t : batch) {
    const Vector ret = returns_to_go(t, gamma);
    const int horizon = t.horizon > 0 ? t.horizon : t.size();
    for (int h = 0; h < t.size(); ++h, ++r) {
      design.row(r) = ValueBaseline::features(t.steps[static_cast<std::size_t>(h)].obs, h, horizon).transpose();
      target[r] = ret[h];
    }
  }
  ValueBaseline out;
  out.constant_ = target.mean();
  if (rows < cols) return out;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) return out;
  out.weights_ = qr.solve(target);
  if (!out.weights_.allFinite()) out.weights_.resize(0);
  return out;
}

Vector segment_gradient(const Policy& policy, std::span<const Step> steps, const PolicyParams& theta, double gamma,
                        const Vector& baseline) {
  if (steps.empty()) return Vector::Zero(policy.parameter_count());
  const ObservationBatch x = stack_observations(steps);
  Vector adv = returns_to_go(steps, gamma);
  if (baseline.size() != 0) {
    if (baseline.size() != adv.size()) throw std::invalid_argument("segment_gradient: baseline length mismatch");
    adv -= baseline;
  }
  // (e_a - p) scaled by the advantage, per column.
  Matrix u = -action_distribution(policy, theta, x);
  for (Eigen::Index h = 0; h < u.cols(); ++h) {
    const int a = steps[static_cast<std::size_t>(h)].action;
    if (a < 0 || a >= policy.action_count()) throw std::out_of_range("recorded action outside the catalog");
    u(a, h) += 1.0;
    u.col(h) *= adv[h];
  }
  return policy.logits_vjp(theta, x, u);
}

Vector trajectory_gradient(const Policy& policy, const Trajectory& traj, const PolicyParams& theta, double gamma,
                           const ValueBaseline* baseline) {
  return segment_gradient(policy, traj.steps, theta, gamma, baseline ? baseline->evaluate(traj) : Vector());
}

Vector mc_policy_gradient(const Policy& policy, const std::vector<Trajectory>& batch, const PolicyParams& theta,
                          double gamma, const ValueBaseline* baseline) {
  if (batch.empty()) throw std::invalid_argument("mc_policy_gradient: empty batch");
  Vector g = Vector::Zero(policy.parameter_count());
  for (const auto& t : batch) g += trajectory_gradient(policy, t, theta, gamma, baseline);
  return g / static_cast<double>(batch.size());
}

int TrajectoryBank::depth() const {
  if (trajectories.empty()) return 0;
  std::size_t d = trajectories.front().size();
  for (const auto& v : trajectories) d = std::min(d, v.size());
  return static_cast<int>(d);
}

void TrajectoryBank::validate() const {
  if (anchors.empty()) throw std::invalid_argument("trajectory bank has no anchor modes");
  if (trajectories.size() != anchors.size()) throw std::invalid_argument("trajectory bank not keyed by its anchors");
  for (const auto& per_mode : trajectories)
    for (const auto& t : per_mode)
      if (t.horizon != horizon) throw std::invalid_argument("bank trajectories disagree on the horizon");
}

std::string to_string(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "sgd") return Optimizer::kSgd;
  throw std::invalid_argument("unknown optimizer: " + s);
}

ModeSampler fixed_modes(std::vector<Mode> modes) {
  return [modes = std::move(modes)](int, Rng&) { return modes; };
}

namespace {

struct StreamKey {
  std::uint64_t purpose;
  std::uint64_t iteration;
  std::uint64_t mode;
};

std::vector<Trajectory> collect(const Policy& policy, const EnvFactory& make_env, const Mode& mode,
                                const PolicyParams& theta, int count, std::uint64_t seed, StreamKey key,
                                int workers) {
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  parallel_for(count, workers, [&](int e) {
    auto env = make_env(mode);
    const auto ep = static_cast<std::uint64_t>(e);
    Rng env_rng = make_rng(seed, {key.purpose, key.iteration, key.mode, ep, tag(Stream::kEnvironment)});
    Rng pol_rng = make_rng(seed, {key.purpose, key.iteration, key.mode, ep, tag(Stream::kPolicy)});
    out[static_cast<std::size_t>(e)] = rollout(*env, policy, theta, env_rng, pol_rng);
  });
  return out;
}

}  // namespace

TrajectoryBank collect_bank(const Policy& policy, const EnvFactory& make_env, const std::vector<Mode>& modes,
                            const PolicyParams& theta, int count, std::uint64_t seed, int workers) {
  TrajectoryBank bank;
  bank.anchors = modes;
  bank.policy_hash = params_hash(theta);
  for (std::size_t j = 0; j < modes.size(); ++j) {
    bank.trajectories.push_back(
        collect(policy, make_env, modes[j], theta, count, seed, StreamKey{tag(Stream::kBank), 0, j}, workers));
  }
  bank.horizon = 0;
  for (const auto& per_mode : bank.trajectories)
    if (!per_mode.empty()) bank.horizon = per_mode.front().horizon;
  return bank;
}

MetaTrainReport meta_train(const Policy& policy, const EnvFactory& make_env, const ModeSampler& sample_modes,
                           const TrainerConfig& cfg, PolicyParams theta0) {
  if (cfg.episodes_per_mode <= 0 || cfg.max_iterations < 0 || cfg.plateau_window <= 0)
    throw std::invalid_argument("meta_train: invalid trainer configuration");
  if (theta0.size() != policy.parameter_count()) throw std::invalid_argument("meta_train: theta0 has wrong size");

  MetaTrainReport report;
  PolicyParams theta = std::move(theta0);
  Rng mode_rng = make_rng(cfg.seed, {tag(Stream::kTraining), 0xa11c});
  std::vector<Mode> batch_modes;
  const int w = cfg.plateau_window;
  Vector m1 = Vector::Zero(policy.parameter_count());
  Vector m2 = Vector::Zero(policy.parameter_count());

  for (int k = 0; k < cfg.max_iterations; ++k) {
    batch_modes = sample_modes(k, mode_rng);
    if (batch_modes.empty()) throw std::invalid_argument("meta_train: mode sampler returned an empty batch");

    Vector step = Vector::Zero(policy.parameter_count());
    double reward_sum = 0.0;
    int reward_count = 0;
    for (std::size_t j = 0; j < batch_modes.size(); ++j) {
      const auto batch = collect(policy, make_env, batch_modes[j], theta, cfg.episodes_per_mode, cfg.seed,
                                 StreamKey{tag(Stream::kTraining), static_cast<std::uint64_t>(k) + 1, j}, cfg.workers);
      for (const auto& t : batch) reward_sum += t.total_reward();
      reward_count += static_cast<int>(batch.size());
      if (cfg.use_baseline) {
        const ValueBaseline b = fit_baseline(batch, cfg.gamma);
        step += mc_policy_gradient(policy, batch, theta, cfg.gamma, &b);
      } else {
        step += mc_policy_gradient(policy, batch, theta, cfg.gamma);
      }
    }
    step /= static_cast<double>(batch_modes.size());
    if (!step.allFinite()) {
      std::ostringstream msg;
      msg << "meta_train: non-finite gradient at iteration " << k << " (|theta| = " << theta.norm() << ")";
      throw std::runtime_error(msg.str());
    }
    if (cfg.max_grad_norm > 0.0 && step.norm() > cfg.max_grad_norm) step *= cfg.max_grad_norm / step.norm();
    if (cfg.optimizer == Optimizer::kAdam) {
      m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * step;
      m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * step.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, k + 1);
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, k + 1);
      theta.array() += cfg.step_size * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_epsilon);
    } else {
      theta += cfg.step_size * step;
    }
    report.iteration_rewards.push_back(reward_sum / reward_count);
    report.iterations = k + 1;

    const int n = static_cast<int>(report.iteration_rewards.size());
    if (n >= std::max(cfg.min_iterations, 2 * w)) {
      const auto& r = report.iteration_rewards;
      const double now = std::accumulate(r.end() - w, r.end(), 0.0) / w;
      const double prev = std::accumulate(r.end() - 2 * w, r.end() - w, 0.0) / w;
      if (std::abs(now - prev) <= cfg.plateau_tolerance * std::max(std::abs(prev), 1e-12)) {
        report.converged = true;
        break;
      }
    }
  }

  if (batch_modes.empty()) batch_modes = sample_modes(0, mode_rng);
  report.theta = theta;
  report.anchors = batch_modes;
  if (cfg.bank_size > 0) {
    report.banks = collect_bank(policy, make_env, batch_modes, theta, cfg.bank_size, cfg.seed, cfg.workers);
  } else {
    report.banks.anchors = batch_modes;
    report.banks.trajectories.resize(batch_modes.size());
    report.banks.policy_hash = params_hash(theta);
  }
  return report;
}

}  // namespace cola
