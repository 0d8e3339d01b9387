#include "cola/lookahead.hpp"

#include <algorithm>
#include <numeric>

namespace cola {

int LookaheadWindow::state_count() const {
  int n = 0;
  for (const auto& s : segments) n += static_cast<int>(s.size());
  return n;
}

ObservationBatch LookaheadWindow::states() const {
  const int n = state_count();
  if (n == 0) return ObservationBatch();
  Eigen::Index dim = 0;
  for (const auto& s : segments)
    if (!s.empty()) dim = s.front().obs.size();
  ObservationBatch x(dim, n);
  Eigen::Index c = 0;
  for (const auto& s : segments)
    for (const auto& st : s) x.col(c++) = st.obs;
  return x;
}

WindowSet sample_window(const TrajectoryBank& bank, int t, int K, int M, Rng& rng) {
  if (K <= 0 || M <= 0) throw std::invalid_argument("sample_window: K and M must be positive");
  if (t < 0 || t + K > bank.horizon) throw std::out_of_range("sample_window: window extends past the horizon");
  WindowSet out;
  out.reserve(bank.trajectories.size());
  for (const auto& per_mode : bank.trajectories) {
    if (static_cast<int>(per_mode.size()) < M)
      throw std::invalid_argument("sample_window: bank holds fewer than M trajectories for a mode");
    // Partial Fisher-Yates: the first M entries form a uniform draw without replacement.
    std::vector<int> idx(per_mode.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < M; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(idx.size()) - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    LookaheadWindow w;
    w.start = t;
    w.length = K;
    w.segments.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) {
      const auto& steps = per_mode[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].steps;
      const auto n = static_cast<int>(steps.size());
      const int lo = std::min(t, n);
      const int hi = std::min(t + K, n);
      w.segments.emplace_back(steps.data() + lo, static_cast<std::size_t>(hi - lo));
    }
    out.push_back(std::move(w));
  }
  return out;
}

namespace {

/// Per-segment centred returns. Without the baseline this is R^k itself.
std::vector<Vector> segment_advantages(const LookaheadWindow& w, double gamma, bool leave_one_out) {
  std::vector<Vector> ret;
  ret.reserve(w.segments.size());
  for (const auto& s : w.segments) ret.push_back(returns_to_go(s, gamma));
  if (!leave_one_out) return ret;
  Eigen::Index longest = 0;
  for (const auto& r : ret) longest = std::max(longest, r.size());
  Vector sum = Vector::Zero(longest);
  Vector count = Vector::Zero(longest);
  for (const auto& r : ret) {
    sum.head(r.size()) += r;
    count.head(r.size()).array() += 1.0;
  }
  std::vector<Vector> adv;
  adv.reserve(ret.size());
  for (const auto& r : ret) {
    Vector a = r;
    for (Eigen::Index k = 0; k < r.size(); ++k)
      if (count[k] > 1.0) a[k] -= (sum[k] - r[k]) / (count[k] - 1.0);
    adv.push_back(std::move(a));
  }
  return adv;
}

/// Segment gradient with explicit advantages (centred returns).
Vector advantage_gradient(const Policy& policy, std::span<const Step> steps, const PolicyParams& theta,
                          const Vector& adv) {
  if (steps.empty()) return Vector::Zero(policy.parameter_count());
  const ObservationBatch x = stack_observations(steps);
  Matrix u = -action_distribution(policy, theta, x);
  for (Eigen::Index h = 0; h < u.cols(); ++h) {
    const int a = steps[static_cast<std::size_t>(h)].action;
    if (a < 0 || a >= policy.action_count()) throw std::out_of_range("recorded action outside the catalog");
    u(a, h) += 1.0;
    u.col(h) *= adv[h];
  }
  return policy.logits_vjp(theta, x, u);
}

void check_weights(const Vector& w, const WindowSet& windows) {
  if (static_cast<std::size_t>(w.size()) != windows.size())
    throw std::invalid_argument("lookahead: weight count differs from the number of windows");
  if (!w.allFinite() || (w.array() < 0.0).any()) throw std::invalid_argument("lookahead: invalid mode weights");
  for (Eigen::Index z = 0; z < w.size(); ++z)
    if (w[z] > 0.0 && windows[static_cast<std::size_t>(z)].segments.empty())
      throw std::invalid_argument("lookahead: window with positive weight has no segments");
}

struct PreparedMode {
  double weight = 0.0;  // gradient weight
  const LookaheadWindow* window = nullptr;
  std::vector<Vector> advantages;
  ObservationBatch states;
};

std::vector<PreparedMode> prepare(const Vector& weights, const WindowSet& windows, double gamma, bool loo) {
  std::vector<PreparedMode> out;
  for (std::size_t z = 0; z < windows.size(); ++z) {
    const double w = weights[static_cast<Eigen::Index>(z)];
    if (w == 0.0) continue;
    PreparedMode m;
    m.weight = w;
    m.window = &windows[z];
    m.advantages = segment_advantages(windows[z], gamma, loo);
    m.states = windows[z].states();
    out.push_back(std::move(m));
  }
  return out;
}

Vector weighted_gradient(const Policy& policy, const PolicyParams& theta, const std::vector<PreparedMode>& modes) {
  Vector g = Vector::Zero(policy.parameter_count());
  for (const auto& m : modes) {
    Vector gz = Vector::Zero(policy.parameter_count());
    for (std::size_t i = 0; i < m.window->segments.size(); ++i)
      gz += advantage_gradient(policy, m.window->segments[i], theta, m.advantages[i]);
    g += m.weight * gz / static_cast<double>(m.window->segments.size());
  }
  return g;
}

}  // namespace

Vector conjectural_gradient(const Policy& policy, const Belief& belief, const PolicyParams& theta,
                            const WindowSet& windows, double gamma, bool leave_one_out_baseline) {
  check_weights(belief, windows);
  return weighted_gradient(policy, theta, prepare(belief, windows, gamma, leave_one_out_baseline));
}

std::string to_string(StepMode m) {
  switch (m) {
    case StepMode::kFull:
      return "full";
    case StepMode::kLineSearch:
      return "line_search";
    case StepMode::kFixed:
      return "fixed";
  }
  return "unknown";
}

StepMode step_mode_from_string(const std::string& s) {
  if (s == "full") return StepMode::kFull;
  if (s == "line_search") return StepMode::kLineSearch;
  if (s == "fixed") return StepMode::kFixed;
  throw std::invalid_argument("unknown step mode: " + s);
}

std::string to_string(Expansion e) { return e == Expansion::kMeta ? "meta" : "current"; }

Expansion expansion_from_string(const std::string& s) {
  if (s == "meta") return Expansion::kMeta;
  if (s == "current") return Expansion::kCurrent;
  throw std::invalid_argument("unknown expansion point: " + s);
}

void TrustRegionConfig::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("trust region: delta must be >= 0");
  if (cg_iterations <= 0) throw std::invalid_argument("trust region: cg_iterations must be positive");
  if (!(damping >= 0.0)) throw std::invalid_argument("trust region: damping must be >= 0");
  if (max_backtracks < 0) throw std::invalid_argument("trust region: max_backtracks must be >= 0");
  if (!(fixed_step_fraction > 0.0 && fixed_step_fraction <= 1.0))
    throw std::invalid_argument("trust region: fixed_step_fraction must lie in (0, 1]");
}

TrustRegionStep trust_region_step(const PolicyParams& theta, const Vector& dtheta,
                                  const std::function<Vector(const Vector&)>& avp, const TrustRegionConfig& cfg,
                                  const StepCheck& check) {
  TrustRegionStep out;
  out.theta = theta;
  if (dtheta.size() != theta.size()) throw std::invalid_argument("trust_region_step: direction has wrong size");
  if (cfg.delta == 0.0) {
    out.diagnostic = "zero trust region";
    return out;
  }
  const double q = dtheta.dot(avp(dtheta));
  out.curvature = q;
  if (!(q > 0.0) || !std::isfinite(q)) {
    out.diagnostic = "non-positive curvature along the search direction";
    return out;
  }
  const double beta_max = std::sqrt(2.0 * cfg.delta / q);
  double beta = beta_max;
  if (cfg.step_mode == StepMode::kFixed)
    beta = cfg.fixed_step > 0.0 ? std::min(cfg.fixed_step, beta_max) : cfg.fixed_step_fraction * beta_max;

  if (cfg.step_mode == StepMode::kLineSearch && check) {
    bool accepted = false;
    for (int i = 0; i <= cfg.max_backtracks; ++i) {
      if (check(theta + beta * dtheta)) {
        accepted = true;
        break;
      }
      out.backtracks = i + 1;
      beta *= 0.5;
    }
    if (!accepted) {
      out.diagnostic = "line search exhausted";
      return out;
    }
  }
  out.beta = beta;
  out.quadratic_kl = 0.5 * beta * beta * q;
  out.theta = theta + beta * dtheta;
  out.moved = beta > 0.0;
  return out;
}

LookaheadResult lookahead_update(const Policy& policy, const PolicyParams& theta, const Vector& weights,
                                 const WindowSet& windows, const LookaheadConfig& cfg) {
  cfg.trust_region.validate();
  check_weights(weights, windows);
  LookaheadResult out;
  out.theta = theta;

  const auto modes = prepare(weights, windows, cfg.gamma, cfg.leave_one_out_baseline);
  const Vector g = weighted_gradient(policy, theta, modes);
  out.grad_norm = g.norm();
  if (cfg.trust_region.delta == 0.0) {
    out.diagnostic = "zero trust region";
    return out;
  }

  // Fisher weights: the gradient weights renormalised over modes that have states.
  std::vector<double> fisher_w;
  double total = 0.0;
  for (const auto& m : modes) {
    fisher_w.push_back(m.states.cols() > 0 ? m.weight : 0.0);
    total += fisher_w.back();
  }
  if (!(total > 0.0)) {
    out.diagnostic = "no window states";
    return out;
  }
  for (auto& w : fisher_w) w /= total;
  if (out.grad_norm == 0.0) {
    out.diagnostic = "zero gradient";
    return out;
  }

  const double damping = cfg.trust_region.damping;
  const std::function<Vector(const Vector&)> avp = [&](const Vector& v) {
    Vector r = damping * v;
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (fisher_w[i] > 0.0) r += fisher_w[i] * fisher_vector_product(policy, theta, modes[i].states, v);
    return r;
  };
  const CgResult cg = conjugate_gradient(avp, g, cfg.trust_region.cg_iterations, cfg.trust_region.cg_tolerance);
  out.cg_residual = cg.residual;
  out.cg_iterations = cg.iterations;

  auto sampled_kl = [&](const PolicyParams& cand) {
    double kl = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (fisher_w[i] > 0.0) kl += fisher_w[i] * mean_kl_divergence(policy, theta, cand, modes[i].states);
    return kl;
  };
  // Importance-weighted surrogate gain sum_h (pi'/pi - 1) A_h, weighted like the gradient.
  std::vector<Matrix> base_probs;
  for (const auto& m : modes)
    base_probs.push_back(m.states.cols() > 0 ? action_distribution(policy, theta, m.states) : Matrix());
  auto surrogate_gain = [&](const PolicyParams& cand) {
    double gain = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const auto& m = modes[i];
      if (m.states.cols() == 0) continue;
      const Matrix p = action_distribution(policy, cand, m.states);
      double gz = 0.0;
      Eigen::Index c = 0;
      for (std::size_t s = 0; s < m.window->segments.size(); ++s) {
        const auto& seg = m.window->segments[s];
        for (std::size_t h = 0; h < seg.size(); ++h, ++c) {
          const int a = seg[h].action;
          gz += (p(a, c) / base_probs[i](a, c) - 1.0) * m.advantages[s][static_cast<Eigen::Index>(h)];
        }
      }
      gain += m.weight * gz / static_cast<double>(m.window->segments.size());
    }
    return gain;
  };
  const StepCheck check = [&](const PolicyParams& cand) {
    return sampled_kl(cand) <= cfg.trust_region.delta && surrogate_gain(cand) > 0.0;
  };

  const TrustRegionStep step = trust_region_step(theta, cg.x, avp, cfg.trust_region, check);
  out.theta = step.theta;
  out.beta = step.beta;
  out.quadratic_kl = step.quadratic_kl;
  out.moved = step.moved;
  out.diagnostic = step.diagnostic;
  out.sampled_kl = step.moved ? sampled_kl(step.theta) : 0.0;
  return out;
}

EpisodeStreams EpisodeStreams::make(std::uint64_t seed, std::uint64_t episode) {
  return EpisodeStreams{
      make_rng(seed, {episode, tag(Stream::kEnvironment)}), make_rng(seed, {episode, tag(Stream::kPolicy)}),
      make_rng(seed, {episode, tag(Stream::kWindow)}),      make_rng(seed, {episode, tag(Stream::kClassifier)}),
      make_rng(seed, {episode, tag(Stream::kOracle)}),
  };
}

EpisodeResult cola_episode(const Policy& policy, const PolicyParams& meta_theta, const ModeClassifier& classifier,
                           const TrajectoryBank& bank, Environment& env, const ColaConfig& cfg, std::uint64_t seed,
                           std::uint64_t episode) {
  bank.validate();
  if (bank.policy_hash != params_hash(meta_theta))
    throw std::invalid_argument("cola_episode: trajectory bank was not generated by the meta-policy");
  if (classifier.class_count() != bank.mode_count())
    throw std::invalid_argument("cola_episode: classifier and bank disagree on the number of modes");
  if (env.horizon() != bank.horizon) throw std::invalid_argument("cola_episode: bank horizon differs from the task");
  if (cfg.gradient_belief) validate_probabilities(*cfg.gradient_belief, "gradient belief");
  const auto& la = cfg.lookahead;
  const bool adapt = la.trust_region.delta > 0.0;
  if (adapt && bank.depth() < la.M) throw std::invalid_argument("cola_episode: bank holds fewer than M trajectories");

  EpisodeStreams rng = EpisodeStreams::make(seed, episode);
  EpisodeResult res;
  res.trajectory.horizon = env.horizon();
  PolicyParams theta = meta_theta;
  Belief belief = uniform_belief(bank.mode_count());
  Observation obs = env.reset(rng.env);

  while (!env.done()) {
    const int t = env.time();
    StepLog log;
    log.t = t;
    log.true_label = nearest_anchor(env.mode(), bank.anchors);
    const Vector f =
        floor_likelihood(classifier.probabilities(obs, log.true_label, rng.classifier), cfg.likelihood_floor);
    if (cfg.use_filter) {
      belief = bayes_update(belief, f).belief;
    } else {
      belief = f / f.sum();
    }
    log.belief = belief;
    log.predicted_label = argmax_label(belief);

    Step st;
    st.obs = obs;
    st.state = env.vehicle_state();
    st.mode = env.mode();
    st.action = sample_action(policy, theta, obs, rng.policy);
    const StepOutcome out = env.step(st.action, rng.env);
    st.reward = out.reward;
    log.reward = out.reward;
    log.speed = env.vehicle_state().speed;
    res.trajectory.steps.push_back(std::move(st));
    obs = out.obs;

    if (adapt && t + la.K <= bank.horizon) {
      const WindowSet windows = sample_window(bank, t, la.K, la.M, rng.window);
      const PolicyParams& center = la.expansion == Expansion::kMeta ? meta_theta : theta;
      const LookaheadResult r =
          lookahead_update(policy, center, cfg.gradient_belief ? *cfg.gradient_belief : belief, windows, la);
      theta = r.theta;
      log.grad_norm = r.grad_norm;
      log.cg_residual = r.cg_residual;
      log.beta = r.beta;
      log.sampled_kl = r.sampled_kl;
      log.adapted = r.moved;
    }
    if (cfg.log_drift) log.drift_kl = kl_divergence(policy, meta_theta, theta, res.trajectory.steps.back().obs);
    res.accuracy.predicted.push_back(log.predicted_label);
    res.accuracy.truth.push_back(log.true_label);
    res.logs.push_back(std::move(log));
  }
  const EpisodeStats stats = env.stats();
  res.trajectory.terminal_time = stats.t;
  res.trajectory.out_of_lane_count = stats.out_of_lane;
  res.trajectory.slow_count = stats.slow;
  res.trajectory.terminal_reward = stats.terminal_reward;
  res.final_theta = theta;
  return res;
}

}  // namespace cola
