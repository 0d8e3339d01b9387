#include "cola/meta.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace cola;

namespace {
const Mode kDry{20, 0, 0};
const Mode kWet{90, 60, 50};

EnvFactory bandit_factory(double pay0, double pay1) {
  return [=](const Mode& m) { return std::make_unique<oracle::ModeBandit>(m, pay0, pay1); };
}
}  // namespace

TEST_CASE("meta-training on a two-mode bandit maximises the mode-averaged return") {
  // Averaged over both modes arm 1 pays 0.5 * 2 = 1 and arm 0 pays 0.5 * 1 = 0.5.
  const Policy pol = Policy::linear(1, 2);
  TrainerConfig cfg;
  cfg.step_size = 0.1;
  cfg.max_iterations = 150;
  cfg.min_iterations = 150;
  cfg.episodes_per_mode = 16;
  cfg.bank_size = 10;
  const MetaTrainReport rep =
      meta_train(pol, bandit_factory(1.0, 2.0), fixed_modes({kDry, kWet}), cfg, pol.initial_params());
  const Vector p = action_distribution(pol, rep.theta, Observation(Observation::Ones(1)));
  CHECK(p[1] > 0.95);
  CHECK(rep.iterations == 150);
  CHECK(rep.iteration_rewards.size() == 150);
  CHECK(rep.iteration_rewards.back() > rep.iteration_rewards.front());

  // Bank: one list per anchor, generated by the final parameters.
  REQUIRE(rep.banks.mode_count() == 2);
  CHECK(rep.banks.anchors[0] == kDry);
  CHECK(rep.banks.depth() == 10);
  CHECK(rep.banks.policy_hash == params_hash(rep.theta));
  CHECK(rep.banks.horizon == 1);
  for (const auto& t : rep.banks.trajectories[1]) CHECK(t.steps.front().mode == kWet);
  CHECK_NOTHROW(rep.banks.validate());
}

TEST_CASE("meta-training is reproducible and independent of the worker count") {
  const Policy pol = Policy::linear(1, 2);
  TrainerConfig cfg;
  cfg.max_iterations = 20;
  cfg.min_iterations = 20;
  cfg.bank_size = 4;
  const auto a = meta_train(pol, bandit_factory(1.0, 0.5), fixed_modes({kDry, kWet}), cfg, pol.initial_params());
  cfg.workers = 3;
  const auto b = meta_train(pol, bandit_factory(1.0, 0.5), fixed_modes({kDry, kWet}), cfg, pol.initial_params());
  CHECK(a.theta == b.theta);
  CHECK(a.iteration_rewards == b.iteration_rewards);
}

TEST_CASE("plain SGD follows the averaged gradient") {
  // With SGD and a single iteration the update equals step_size times the batch gradient,
  // which for a one-step bandit is unbiased for the exact gradient; check the sign.
  const Policy pol = Policy::linear(1, 2);
  TrainerConfig cfg;
  cfg.optimizer = Optimizer::kSgd;
  cfg.step_size = 0.5;
  cfg.max_iterations = 1;
  cfg.min_iterations = 1;
  cfg.episodes_per_mode = 400;
  cfg.bank_size = 0;
  cfg.use_baseline = false;
  const auto rep = meta_train(pol, bandit_factory(1.0, 2.0), fixed_modes({kDry, kWet}), cfg, pol.initial_params());
  // Exact gradient at the uniform policy: d/d(bias_1) J = p1 (1 - p1) (2 * 0.5 - 1 * 0.5) = 0.125.
  const double bias1 = rep.theta[3] - rep.theta[2];
  CHECK(bias1 > 0.0);
  CHECK(bias1 == doctest::Approx(0.5 * 2 * 0.125).epsilon(0.35));
  CHECK(optimizer_from_string(to_string(Optimizer::kSgd)) == Optimizer::kSgd);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), std::invalid_argument);
}

TEST_CASE("rollouts and banks are reproducible") {
  LaneWorldConfig lw;
  ScheduleConfig sc;
  sc.horizon = 30;
  const Policy pol = Policy::linear(kObservationDim, 9);
  const PolicyParams theta = PolicyParams::Constant(pol.parameter_count(), 0.1);
  EnvFactory fac = [&](const Mode& m) {
    ScheduleConfig s = sc;
    s.fixed_mode = m;
    return std::make_unique<LaneWorld>(lw, s);
  };
  const auto b1 = collect_bank(pol, fac, {kDry, kWet}, theta, 5, 3, 1);
  const auto b2 = collect_bank(pol, fac, {kDry, kWet}, theta, 5, 3, 2);
  for (int z = 0; z < 2; ++z)
    for (int i = 0; i < 5; ++i)
      CHECK(b1.trajectories[z][i].total_reward() == b2.trajectories[z][i].total_reward());
  CHECK(b1.policy_hash == params_hash(theta));

  auto env = fac(kWet);
  Rng e1 = make_rng(1), p1 = make_rng(2);
  const Trajectory t = rollout(*env, pol, theta, e1, p1);
  CHECK(t.size() == t.terminal_time);
  CHECK(t.horizon == 30);
  CHECK(stack_observations(t.steps).cols() == t.size());
  CHECK(t.reward_series(40).tail(40 - t.size()).isZero());

  TrajectoryBank broken = b1;
  broken.trajectories[0][0].horizon = 7;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("value baseline falls back to a constant on degenerate designs") {
  std::vector<Trajectory> batch(1);
  Step s;
  s.obs = Vector::Ones(2);
  s.reward = 3.0;
  batch[0].steps = {s};
  batch[0].horizon = 1;
  const ValueBaseline b = fit_baseline(batch);
  CHECK(b.is_constant());
  CHECK(b.constant_value() == 3.0);
  CHECK(b(Vector::Zero(2), 0, 1) == 3.0);
  CHECK(ValueBaseline::constant(2.5).evaluate(batch[0])[0] == 2.5);
}
