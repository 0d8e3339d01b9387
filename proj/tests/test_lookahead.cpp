#include "cola/baselines.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace cola;

namespace {

Vector random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Matrix random_spd(int n, Rng& rng) {
  Matrix q(n, n);
  for (int j = 0; j < n; ++j) q.col(j) = random_vector(n, rng);
  return q.transpose() * q / n + Matrix::Identity(n, n);
}

struct SmallWorld {
  LaneWorldConfig env;
  ScheduleConfig schedule;
  std::vector<Mode> anchors{mode_params(-20, -10), mode_params(60, -10)};
  Policy policy = Policy::linear(kObservationDim, 9);
  PolicyParams theta;
  TrajectoryBank bank;

  explicit SmallWorld(int H = 40) {
    schedule.horizon = H;
    env.slip_gain = 0.01;
    env.slip_speed = 0.0;
    Rng rng = make_rng(77);
    theta = random_vector(policy.parameter_count(), rng, 0.3);
    // Bias towards throttle so that episodes move.
    theta[policy.parameter_count() - 9 + 1] += 1.5;
    bank = collect_bank(policy, factory(), anchors, theta, 12, 5);
  }
  EnvFactory factory() const {
    return [this](const Mode& m) {
      ScheduleConfig s = schedule;
      s.fixed_mode = m;
      return std::make_unique<LaneWorld>(env, s);
    };
  }
  std::unique_ptr<LaneWorld> dynamic() const { return std::make_unique<LaneWorld>(env, schedule); }
};

}  // namespace

TEST_CASE("conjugate gradient matches a dense solve on SPD systems") {
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix A = random_spd(50, rng);
    const Vector b = random_vector(50, rng);
    const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(A * v); }, b, 200, 1e-14);
    const Vector dense = A.llt().solve(b);
    CHECK((A * r.x - b).norm() <= 1e-8);
    CHECK(r.residual <= 1e-8);
    CHECK((r.x - dense).norm() <= 1e-8 * (1.0 + dense.norm()));
  }
  const CgResult zero = conjugate_gradient([](const Vector& v) { return v; }, Vector::Zero(4), 10, 1e-12);
  CHECK(zero.x.isZero());
  CHECK(zero.iterations == 0);
  Vector bad = Vector::Ones(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(conjugate_gradient([](const Vector& v) { return v; }, bad, 10, 1e-12), std::runtime_error);
}

TEST_CASE("full trust-region steps sit on the quadratic KL boundary") {
  Rng rng = make_rng(11);
  const Matrix A = random_spd(12, rng);
  const std::function<Vector(const Vector&)> avp = [&](const Vector& v) { return Vector(A * v); };
  for (double delta : {1e-4, 1e-2, 0.5}) {
    TrustRegionConfig cfg;
    cfg.delta = delta;
    cfg.step_mode = StepMode::kFull;
    const Vector theta = random_vector(12, rng);
    const Vector d = random_vector(12, rng);
    const TrustRegionStep s = trust_region_step(theta, d, avp, cfg);
    REQUIRE(s.moved);
    const Vector step = s.theta - theta;
    CHECK(std::abs(0.5 * step.dot(A * step) - delta) <= 1e-10);
    CHECK(std::abs(s.quadratic_kl - delta) <= 1e-10);
  }
}

TEST_CASE("fixed, zero and backtracking trust-region steps") {
  Rng rng = make_rng(12);
  const Matrix A = random_spd(6, rng);
  const std::function<Vector(const Vector&)> avp = [&](const Vector& v) { return Vector(A * v); };
  const Vector theta = random_vector(6, rng);
  const Vector d = random_vector(6, rng);
  const double beta_max = std::sqrt(2 * 0.01 / d.dot(A * d));

  TrustRegionConfig cfg;
  cfg.delta = 0.01;
  cfg.step_mode = StepMode::kFixed;
  cfg.fixed_step_fraction = 0.5;
  CHECK(trust_region_step(theta, d, avp, cfg).beta == doctest::Approx(0.5 * beta_max));
  cfg.fixed_step = 10.0;
  CHECK(trust_region_step(theta, d, avp, cfg).beta == doctest::Approx(beta_max));
  cfg.fixed_step = 1e-3 * beta_max;
  CHECK(trust_region_step(theta, d, avp, cfg).beta == doctest::Approx(1e-3 * beta_max));

  cfg.step_mode = StepMode::kLineSearch;
  int calls = 0;
  const TrustRegionStep ls = trust_region_step(theta, d, avp, cfg, [&](const PolicyParams&) { return ++calls > 2; });
  CHECK(ls.backtracks == 2);
  CHECK(ls.beta == doctest::Approx(beta_max / 4));
  cfg.max_backtracks = 3;
  const TrustRegionStep fail = trust_region_step(theta, d, avp, cfg, [](const PolicyParams&) { return false; });
  CHECK_FALSE(fail.moved);
  CHECK(fail.theta == theta);

  cfg.delta = 0.0;
  CHECK_FALSE(trust_region_step(theta, d, avp, cfg).moved);
  cfg.delta = 0.01;
  CHECK_FALSE(trust_region_step(theta, Vector::Zero(6), avp, cfg).moved);
  CHECK_THROWS_AS(trust_region_step(theta, Vector::Zero(5), avp, cfg), std::invalid_argument);
  cfg.fixed_step_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("windows draw distinct trajectories and truncate finished ones") {
  SmallWorld w;
  Rng rng = make_rng(13);
  const WindowSet ws = sample_window(w.bank, 5, 10, 6, rng);
  REQUIRE(ws.size() == 2);
  for (std::size_t z = 0; z < 2; ++z) {
    CHECK(ws[z].segments.size() == 6);
    std::set<const Step*> firsts;
    for (const auto& seg : ws[z].segments) {
      CHECK(seg.size() <= 10);
      if (!seg.empty()) {
        firsts.insert(seg.data());
        const Step* base = nullptr;
        for (const auto& t : w.bank.trajectories[z])
          if (seg.data() >= t.steps.data() && seg.data() < t.steps.data() + t.size()) {
            base = t.steps.data();
            CHECK(seg.size() == static_cast<std::size_t>(std::min(10, std::max(0, t.size() - 5))));
          }
        REQUIRE(base != nullptr);
        CHECK(seg.data() - base == 5);
      }
    }
    CHECK(ws[z].state_count() == ws[z].states().cols());
  }
  CHECK_THROWS_AS(sample_window(w.bank, 35, 10, 6, rng), std::out_of_range);
  CHECK_THROWS_AS(sample_window(w.bank, 0, 10, 13, rng), std::invalid_argument);
}

TEST_CASE("conjectural gradient is the belief-weighted mean of segment gradients") {
  SmallWorld w;
  Rng rng = make_rng(14);
  const WindowSet ws = sample_window(w.bank, 3, 8, 5, rng);
  Belief b(2);
  b << 0.3, 0.7;
  Vector expected = Vector::Zero(w.policy.parameter_count());
  for (std::size_t z = 0; z < 2; ++z) {
    Vector gz = Vector::Zero(expected.size());
    for (const auto& seg : ws[z].segments) gz += segment_gradient(w.policy, seg, w.theta, 0.9);
    expected += b[static_cast<Eigen::Index>(z)] * gz / static_cast<double>(ws[z].segments.size());
  }
  const Vector g = conjectural_gradient(w.policy, b, w.theta, ws, 0.9, false);
  CHECK((g - expected).norm() <= 1e-9 * (1.0 + expected.norm()));

  // Leave-one-out baseline: every step's return is centred on the other segments' mean at that offset.
  Vector loo = Vector::Zero(expected.size());
  for (std::size_t z = 0; z < 2; ++z) {
    const auto& segs = ws[z].segments;
    std::vector<Vector> R;
    for (const auto& s : segs) R.push_back(returns_to_go(s, 1.0));
    Vector gz = Vector::Zero(expected.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      Vector base = Vector::Zero(R[i].size());
      for (Eigen::Index k = 0; k < R[i].size(); ++k) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t j = 0; j < segs.size(); ++j)
          if (j != i && k < R[j].size()) {
            sum += R[j][k];
            ++n;
          }
        base[k] = n > 0 ? sum / n : 0.0;
      }
      gz += segment_gradient(w.policy, segs[i], w.theta, 1.0, base);
    }
    loo += b[static_cast<Eigen::Index>(z)] * gz / static_cast<double>(segs.size());
  }
  const Vector gl = conjectural_gradient(w.policy, b, w.theta, ws, 1.0, true);
  CHECK((gl - loo).norm() <= 1e-9 * (1.0 + loo.norm()));

  // A one-hot belief ignores the other mode entirely.
  Belief onehot(2);
  onehot << 1.0, 0.0;
  WindowSet only_first = ws;
  only_first[1].segments.clear();
  CHECK_THROWS_AS(conjectural_gradient(w.policy, b, w.theta, only_first), std::invalid_argument);
  CHECK((conjectural_gradient(w.policy, onehot, w.theta, only_first) - conjectural_gradient(w.policy, onehot, w.theta, ws))
            .norm() == 0.0);
  CHECK_THROWS_AS(conjectural_gradient(w.policy, Belief::Ones(3) / 3, w.theta, ws), std::invalid_argument);
}

TEST_CASE("lookahead update honours the trust region") {
  SmallWorld w;
  Rng rng = make_rng(15);
  LookaheadConfig cfg;
  cfg.K = 8;
  cfg.M = 6;
  cfg.trust_region.delta = 0.02;
  for (int t : {0, 10, 20}) {
    const WindowSet ws = sample_window(w.bank, t, cfg.K, cfg.M, rng);
    Vector b(2);
    b << 0.6, 0.4;
    cfg.trust_region.step_mode = StepMode::kFull;
    const LookaheadResult full = lookahead_update(w.policy, w.theta, b, ws, cfg);
    if (full.moved) {
      CHECK(std::abs(full.quadratic_kl - 0.02) <= 1e-10);
    }
    cfg.trust_region.step_mode = StepMode::kLineSearch;
    const LookaheadResult ls = lookahead_update(w.policy, w.theta, b, ws, cfg);
    if (ls.moved) {
      CHECK(ls.sampled_kl <= 0.02);
      CHECK(ls.quadratic_kl <= 0.02 + 1e-12);
    }
  }
  cfg.trust_region.delta = 0.0;
  const WindowSet ws = sample_window(w.bank, 0, cfg.K, cfg.M, rng);
  const LookaheadResult none = lookahead_update(w.policy, w.theta, Vector::Ones(2) / 2, ws, cfg);
  CHECK_FALSE(none.moved);
  CHECK(none.theta == w.theta);
}

TEST_CASE("COLA with a zero trust region reproduces the fixed meta-policy") {
  SmallWorld w;
  ColaConfig cfg;
  cfg.lookahead.K = 5;
  cfg.lookahead.M = 4;
  cfg.lookahead.trust_region.delta = 0.0;
  const SyntheticClassifier clf(2, 0.85);
  for (std::uint64_t ep = 0; ep < 5; ++ep) {
    auto e1 = w.dynamic();
    auto e2 = w.dynamic();
    const EpisodeResult c = cola_episode(w.policy, w.theta, clf, w.bank, *e1, cfg, 3, ep);
    const EpisodeResult b = base_episode(w.policy, w.theta, *e2, 3, ep);
    REQUIRE(c.trajectory.size() == b.trajectory.size());
    for (int t = 0; t < c.trajectory.size(); ++t)
      CHECK(c.trajectory.steps[static_cast<std::size_t>(t)].reward == b.trajectory.steps[static_cast<std::size_t>(t)].reward);
    CHECK(c.final_theta == w.theta);
  }
}

TEST_CASE("COLA episodes: logging, determinism and input checks") {
  SmallWorld w;
  ColaConfig cfg;
  cfg.lookahead.K = 5;
  cfg.lookahead.M = 4;
  cfg.lookahead.trust_region.delta = 0.01;
  cfg.log_drift = true;
  const SyntheticClassifier clf(2, 0.85);
  auto e1 = w.dynamic();
  auto e2 = w.dynamic();
  const EpisodeResult a = cola_episode(w.policy, w.theta, clf, w.bank, *e1, cfg, 9, 2);
  const EpisodeResult b = cola_episode(w.policy, w.theta, clf, w.bank, *e2, cfg, 9, 2);
  CHECK(a.trajectory.total_reward() == b.trajectory.total_reward());
  CHECK(a.final_theta == b.final_theta);
  REQUIRE(a.logs.size() == static_cast<std::size_t>(a.trajectory.size()));
  for (const auto& l : a.logs) {
    CHECK(l.belief.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.sampled_kl <= 0.01);
    // Meta-anchored expansion: every adapted policy stays within the trust region of the meta policy.
    CHECK(l.drift_kl >= 0.0);
    if (l.t + 5 > 40) CHECK_FALSE(l.adapted);
  }
  CHECK(a.accuracy.size() == a.trajectory.size());

  TrajectoryBank wrong = w.bank;
  wrong.policy_hash ^= 1;
  auto e3 = w.dynamic();
  CHECK_THROWS_AS(cola_episode(w.policy, w.theta, clf, wrong, *e3, cfg, 1, 0), std::invalid_argument);
  const SyntheticClassifier three(3, 0.8);
  CHECK_THROWS_AS(cola_episode(w.policy, w.theta, three, w.bank, *e3, cfg, 1, 0), std::invalid_argument);
  cfg.lookahead.M = 20;
  CHECK_THROWS_AS(cola_episode(w.policy, w.theta, clf, w.bank, *e3, cfg, 1, 0), std::invalid_argument);
}

TEST_CASE("episode streams separate environment noise from policy noise") {
  EpisodeStreams a = EpisodeStreams::make(1, 2);
  EpisodeStreams b = EpisodeStreams::make(1, 2);
  EpisodeStreams c = EpisodeStreams::make(1, 3);
  CHECK(a.env() == b.env());
  CHECK(a.policy() != a.env());
  CHECK(b.policy() != c.policy());
}

TEST_CASE("enum names round-trip") {
  for (StepMode m : {StepMode::kFull, StepMode::kLineSearch, StepMode::kFixed})
    CHECK(step_mode_from_string(to_string(m)) == m);
  for (Expansion e : {Expansion::kMeta, Expansion::kCurrent}) CHECK(expansion_from_string(to_string(e)) == e);
  CHECK_THROWS_AS(step_mode_from_string("huge"), std::invalid_argument);
}
