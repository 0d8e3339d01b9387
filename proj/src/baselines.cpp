#include "cola/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cola {

MetaTrainReport train_base_policy(const Policy& policy, const EnvFactory& make_env, TrainerConfig cfg,
                                  PolicyParams theta0) {
  cfg.bank_size = 0;
  return meta_train(policy, make_env, fixed_modes({Mode{}}), cfg, std::move(theta0));
}

PolicyParams maml_adapt(const Policy& policy, const PolicyParams& theta, std::span<const Step> past, double alpha) {
  if (past.empty()) throw std::invalid_argument("maml_adapt: empty past window");
  if (alpha == 0.0) return theta;
  return theta + alpha * segment_gradient(policy, past, theta, 1.0);
}

Bucketizer::Bucketizer(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw std::invalid_argument("Bucketizer: no axes");
  for (const auto& a : axes_)
    if (a.bins <= 0 || !(a.hi > a.lo)) throw std::invalid_argument("Bucketizer: invalid axis");
}

Bucketizer Bucketizer::lane_world_default() {
  return Bucketizer({{-1.2, 1.2, 8}, {-2.0, 2.0, 6}, {0.0, 1.0, 8}, {0.2, 1.05, 3}});
}

int Bucketizer::bucket(const Observation& obs) const {
  if (obs.size() != dimension()) throw std::invalid_argument("Bucketizer: observation dimension mismatch");
  int index = 0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const auto& a = axes_[i];
    const double u = (obs[static_cast<Eigen::Index>(i)] - a.lo) / (a.hi - a.lo);
    const int b = std::clamp(static_cast<int>(std::floor(u * a.bins)), 0, a.bins - 1);
    index = index * a.bins + b;
  }
  return index;
}

int Bucketizer::bucket_count() const {
  int n = 1;
  for (const auto& a : axes_) n *= a.bins;
  return n;
}

int QTable::unvisited() const {
  return static_cast<int>(std::count(visits.begin(), visits.end(), 0));
}

Vector QTable::row(const Observation& obs) const { return values.row(bucketizer.bucket(obs)).transpose(); }

int QTable::greedy(const Observation& obs) const { return argmax_label(row(obs)); }

QTable train_q_table(Environment& env, const Bucketizer& bucketizer, const QLearningConfig& cfg) {
  if (cfg.max_episodes <= 0 || cfg.plateau_window <= 0 || !(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
    throw std::invalid_argument("train_q_table: invalid configuration");
  QTable q;
  q.bucketizer = bucketizer;
  q.values = Matrix::Constant(bucketizer.bucket_count(), env.action_count(), cfg.initial_value);
  q.visits.assign(static_cast<std::size_t>(bucketizer.bucket_count()), 0);

  Rng env_rng = make_rng(cfg.seed, {tag(Stream::kEnvironment)});
  Rng explore = make_rng(cfg.seed, {tag(Stream::kPolicy)});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, env.action_count() - 1);
  std::vector<double> change;  // mean |dQ| per update, per episode

  for (int ep = 0; ep < cfg.max_episodes; ++ep) {
    Observation obs = env.reset(env_rng);
    q.mode = env.mode();
    double delta_sum = 0.0;
    int updates = 0;
    while (!env.done()) {
      const int s = bucketizer.bucket(obs);
      // Both draws happen every step so the stream stays aligned across runs.
      const double coin = u(explore);
      const int random_action = any_action(explore);
      const int a = coin < cfg.epsilon ? random_action : argmax_label(q.values.row(s).transpose());
      const StepOutcome out = env.step(a, env_rng);
      double target = out.reward;
      if (!out.done) target += cfg.gamma * q.values.row(bucketizer.bucket(out.obs)).maxCoeff();
      const double d = cfg.learning_rate * (target - q.values(s, a));
      q.values(s, a) += d;
      ++q.visits[static_cast<std::size_t>(s)];
      delta_sum += std::abs(d);
      ++updates;
      obs = out.obs;
    }
    q.episodes = ep + 1;
    change.push_back(updates > 0 ? delta_sum / updates : 0.0);
    if (!q.values.allFinite()) throw std::runtime_error("train_q_table: non-finite value");
    const int w = cfg.plateau_window;
    if (q.episodes >= std::max(cfg.min_episodes, w)) {
      const double recent = std::accumulate(change.end() - w, change.end(), 0.0) / w;
      if (recent <= cfg.plateau_tolerance * (1.0 + q.values.cwiseAbs().mean())) {
        q.converged = true;
        break;
      }
    }
  }
  return q;
}

int q_mix_action(const Belief& belief, const std::vector<QTable>& tables, const Observation& obs) {
  if (tables.size() != static_cast<std::size_t>(belief.size()))
    throw std::invalid_argument("q_mix_action: no Q table for a mode in the belief support");
  Vector mix;
  for (std::size_t z = 0; z < tables.size(); ++z) {
    const double w = belief[static_cast<Eigen::Index>(z)];
    const Vector r = tables[z].row(obs);
    if (mix.size() == 0) mix = Vector::Zero(r.size());
    if (r.size() != mix.size()) throw std::invalid_argument("q_mix_action: Q tables disagree on the action count");
    mix += w * r;
  }
  return argmax_label(mix);
}

namespace {

/// Up to K steps from the environment's current state.
Trajectory partial_rollout(Environment& env, const Policy& policy, const PolicyParams& theta, int K, Rng& rng) {
  Trajectory traj;
  traj.horizon = env.horizon();
  Observation obs = env.observation();
  for (int k = 0; k < K && !env.done(); ++k) {
    Step st;
    st.obs = obs;
    st.state = env.vehicle_state();
    st.mode = env.mode();
    st.action = sample_action(policy, theta, obs, rng);
    const StepOutcome out = env.step(st.action, rng);
    st.reward = out.reward;
    traj.steps.push_back(std::move(st));
    obs = out.obs;
  }
  return traj;
}

void finish(EpisodeResult& res, const Environment& env) {
  const EpisodeStats stats = env.stats();
  res.trajectory.terminal_time = stats.t;
  res.trajectory.out_of_lane_count = stats.out_of_lane;
  res.trajectory.slow_count = stats.slow;
  res.trajectory.terminal_reward = stats.terminal_reward;
}

/// Executes one action and appends the transition and its log row.
Observation act(EpisodeResult& res, Environment& env, const Observation& obs, int action, Rng& env_rng,
                StepLog log) {
  Step st;
  st.obs = obs;
  st.state = env.vehicle_state();
  st.mode = env.mode();
  st.action = action;
  const StepOutcome out = env.step(action, env_rng);
  st.reward = out.reward;
  log.reward = out.reward;
  log.speed = env.vehicle_state().speed;
  res.trajectory.steps.push_back(std::move(st));
  res.logs.push_back(std::move(log));
  return out.obs;
}

}  // namespace

LookaheadResult oracle_step(const Policy& policy, const PolicyParams& theta, const Environment& env,
                            const LookaheadConfig& cfg, Rng& rng) {
  if (cfg.K <= 0 || cfg.M <= 0) throw std::invalid_argument("oracle_step: K and M must be positive");
  std::vector<Trajectory> futures;
  futures.reserve(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) {
    auto copy = env.clone();
    if (!copy) throw std::runtime_error("oracle_step: environment cannot be cloned");
    futures.push_back(partial_rollout(*copy, policy, theta, cfg.K, rng));
  }
  LookaheadWindow w;
  w.start = env.time();
  w.length = cfg.K;
  for (const auto& f : futures) w.segments.emplace_back(f.steps);
  return lookahead_update(policy, theta, Vector::Ones(1), WindowSet{std::move(w)}, cfg);
}

EpisodeResult base_episode(const Policy& policy, const PolicyParams& theta, Environment& env, std::uint64_t seed,
                           std::uint64_t episode) {
  EpisodeStreams rng = EpisodeStreams::make(seed, episode);
  EpisodeResult res;
  res.trajectory.horizon = env.horizon();
  Observation obs = env.reset(rng.env);
  while (!env.done()) {
    StepLog log;
    log.t = env.time();
    obs = act(res, env, obs, sample_action(policy, theta, obs, rng.policy), rng.env, std::move(log));
  }
  finish(res, env);
  res.final_theta = theta;
  return res;
}

EpisodeResult maml_episode(const Policy& policy, const PolicyParams& theta0, Environment& env, int K, double alpha,
                           std::uint64_t seed, std::uint64_t episode) {
  if (K <= 0) throw std::invalid_argument("maml_episode: K must be positive");
  EpisodeStreams rng = EpisodeStreams::make(seed, episode);
  EpisodeResult res;
  res.trajectory.horizon = env.horizon();
  PolicyParams theta = theta0;
  Observation obs = env.reset(rng.env);
  while (!env.done()) {
    StepLog log;
    log.t = env.time();
    obs = act(res, env, obs, sample_action(policy, theta, obs, rng.policy), rng.env, std::move(log));
    const auto& steps = res.trajectory.steps;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(K), steps.size());
    const PolicyParams next = maml_adapt(policy, theta, std::span<const Step>(steps).last(n), alpha);
    res.logs.back().grad_norm = alpha != 0.0 ? (next - theta).norm() / std::abs(alpha) : 0.0;
    res.logs.back().adapted = alpha != 0.0;
    theta = next;
  }
  finish(res, env);
  res.final_theta = theta;
  return res;
}

EpisodeResult qmix_episode(const std::vector<QTable>& tables, const ModeClassifier& classifier,
                           const std::vector<Mode>& anchors, Environment& env, double likelihood_floor,
                           std::uint64_t seed, std::uint64_t episode) {
  if (tables.size() != anchors.size() || classifier.class_count() != static_cast<int>(anchors.size()))
    throw std::invalid_argument("qmix_episode: tables, classifier and anchors disagree");
  EpisodeStreams rng = EpisodeStreams::make(seed, episode);
  EpisodeResult res;
  res.trajectory.horizon = env.horizon();
  Belief belief = uniform_belief(static_cast<int>(anchors.size()));
  Observation obs = env.reset(rng.env);
  while (!env.done()) {
    StepLog log;
    log.t = env.time();
    log.true_label = nearest_anchor(env.mode(), anchors);
    belief = bayes_update(belief, floor_likelihood(classifier.probabilities(obs, log.true_label, rng.classifier),
                                                   likelihood_floor))
                 .belief;
    log.belief = belief;
    log.predicted_label = argmax_label(belief);
    res.accuracy.predicted.push_back(log.predicted_label);
    res.accuracy.truth.push_back(log.true_label);
    obs = act(res, env, obs, q_mix_action(belief, tables, obs), rng.env, std::move(log));
  }
  finish(res, env);
  return res;
}

EpisodeResult oracle_episode(const Policy& policy, const PolicyParams& theta0, Environment& env,
                             const LookaheadConfig& cfg, std::uint64_t seed, std::uint64_t episode) {
  EpisodeStreams rng = EpisodeStreams::make(seed, episode);
  EpisodeResult res;
  res.trajectory.horizon = env.horizon();
  PolicyParams theta = theta0;
  const bool adapt = cfg.trust_region.delta > 0.0;
  Observation obs = env.reset(rng.env);
  while (!env.done()) {
    const int t = env.time();
    StepLog log;
    log.t = t;
    obs = act(res, env, obs, sample_action(policy, theta, obs, rng.policy), rng.env, std::move(log));
    if (adapt && !env.done() && t + cfg.K <= env.horizon()) {
      const PolicyParams& center = cfg.expansion == Expansion::kMeta ? theta0 : theta;
      const LookaheadResult r = oracle_step(policy, center, env, cfg, rng.oracle);
      theta = r.theta;
      auto& l = res.logs.back();
      l.grad_norm = r.grad_norm;
      l.cg_residual = r.cg_residual;
      l.beta = r.beta;
      l.sampled_kl = r.sampled_kl;
      l.adapted = r.moved;
    }
  }
  finish(res, env);
  res.final_theta = theta;
  return res;
}

}  // namespace cola
