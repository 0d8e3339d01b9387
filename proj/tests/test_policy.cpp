#include "cola/meta.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>

using namespace cola;

namespace {

Vector random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

oracle::TabularMdp small_mdp() {
  oracle::TabularMdp m;
  m.S = 3;
  m.A = 2;
  m.H = 3;
  m.mu = {0.5, 0.3, 0.2};
  m.P = {{{0.7, 0.2, 0.1}, {0.1, 0.6, 0.3}},
         {{0.3, 0.3, 0.4}, {0.0, 0.5, 0.5}},
         {{0.2, 0.0, 0.8}, {0.6, 0.4, 0.0}}};
  m.R = {{1.0, -0.5}, {0.25, 2.0}, {-1.0, 0.75}};
  return m;
}

Trajectory as_trajectory(const oracle::TabularMdp& m, const oracle::TabularMdp::Path& p) {
  Trajectory t;
  t.horizon = m.H;
  for (int h = 0; h < m.H; ++h) {
    Step s;
    s.obs = m.obs(p.states[h]);
    s.action = p.actions[h];
    s.reward = m.R[p.states[h]][p.actions[h]];
    t.steps.push_back(s);
  }
  t.terminal_time = m.H;
  return t;
}

}  // namespace

TEST_CASE("action probabilities match the reference softmax") {
  Rng rng = make_rng(1);
  const Policy pol = Policy::linear(3, 4);
  const Vector theta = random_vector(pol.parameter_count(), rng);
  const Vector obs = random_vector(3, rng);
  const Vector p = action_distribution(pol, theta, obs);
  const auto ref = oracle::linear_softmax(oracle::to_std(theta), obs, 4);
  for (int a = 0; a < 4; ++a) CHECK(p[a] == doctest::Approx(ref[a]).epsilon(1e-14));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("log-probability gradient matches complex-step differentiation") {
  Rng rng = make_rng(2);
  const Policy pol = Policy::linear(3, 4);
  const Vector theta = random_vector(pol.parameter_count(), rng);
  const Vector obs = random_vector(3, rng);
  for (int a = 0; a < 4; ++a) {
    const Vector g = log_prob_grad(pol, theta, obs, a);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      std::vector<std::complex<double>> t(theta.data(), theta.data() + theta.size());
      t[static_cast<std::size_t>(i)] += std::complex<double>(0.0, 1e-30);
      const double d = std::log(oracle::linear_softmax(t, obs, 4)[a]).imag() / 1e-30;
      CHECK(std::abs(g[i] - d) <= 1e-12);
    }
  }
}

TEST_CASE("MLP jvp and vjp are adjoint and match finite differences") {
  Rng rng = make_rng(3);
  const Policy pol = Policy::mlp(3, 4, 5);
  const Vector theta = pol.initial_params(9) + random_vector(pol.parameter_count(), rng, 0.3);
  Matrix x(3, 6);
  for (int c = 0; c < 6; ++c) x.col(c) = random_vector(3, rng);
  const Vector v = random_vector(pol.parameter_count(), rng);
  const Matrix u = Matrix::Random(4, 6);
  const Matrix jv = pol.logits_jvp(theta, x, v);
  const Vector jtu = pol.logits_vjp(theta, x, u);
  CHECK((u.array() * jv.array()).sum() == doctest::Approx(v.dot(jtu)).epsilon(1e-12));

  const double eps = 1e-6;
  const Matrix fd = (pol.logits(theta + eps * v, x) - pol.logits(theta - eps * v, x)) / (2 * eps);
  CHECK((fd - jv).norm() <= 1e-7 * (1.0 + jv.norm()));
}

TEST_CASE("parameter validation") {
  const Policy pol = Policy::linear(3, 4);
  CHECK_THROWS_AS(pol.check(Vector::Zero(5), Matrix::Zero(3, 1)), std::invalid_argument);
  CHECK_THROWS_AS(pol.check(Vector::Zero(16), Matrix::Zero(2, 1)), std::invalid_argument);
  CHECK_THROWS_AS(Policy::linear(3, 1), std::invalid_argument);
  CHECK(policy_family_from_string("mlp") == PolicyFamily::kMlp);
  CHECK_THROWS_AS(policy_family_from_string("rnn"), std::invalid_argument);
}

TEST_CASE("sampling follows the action distribution") {
  Rng rng = make_rng(4);
  const Policy pol = Policy::linear(2, 3);
  const Vector theta = random_vector(pol.parameter_count(), rng);
  const Vector obs = random_vector(2, rng);
  const Vector p = action_distribution(pol, theta, obs);
  std::vector<int> counts(3, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_action(pol, theta, obs, rng))];
  for (int a = 0; a < 3; ++a) CHECK(std::abs(counts[a] / double(n) - p[a]) < 5 * std::sqrt(p[a] / n));
}

TEST_CASE("enumerated policy gradient is exact, with and without a baseline") {
  const auto mdp = small_mdp();
  Rng rng = make_rng(5);
  const Policy pol = Policy::linear(oracle::TabularMdp::kObsDim, mdp.A);
  const Vector theta = random_vector(pol.parameter_count(), rng, 0.7);
  const Vector exact = mdp.complex_step_gradient(theta);

  const auto paths = mdp.paths();
  Vector plain = Vector::Zero(theta.size());
  Vector with_baseline = Vector::Zero(theta.size());
  Vector fitted_baseline = Vector::Zero(theta.size());
  double total_prob = 0.0;

  // A baseline fitted on arbitrary trajectories is still a function of (s, h) only.
  std::vector<Trajectory> fit_set;
  for (std::size_t i = 0; i < paths.size(); i += 3) fit_set.push_back(as_trajectory(mdp, paths[i]));
  const ValueBaseline fitted = fit_baseline(fit_set);
  REQUIRE(!fitted.is_constant());

  for (const auto& path : paths) {
    const double prob = mdp.path_probability(path, oracle::to_std(theta));
    total_prob += prob;
    const Trajectory traj = as_trajectory(mdp, path);
    plain += prob * trajectory_gradient(pol, traj, theta);
    Vector b(mdp.H);
    for (int h = 0; h < mdp.H; ++h) b[h] = 3.0 * path.states[h] - 1.5 * h + 0.25;
    with_baseline += prob * segment_gradient(pol, traj.steps, theta, 1.0, b);
    fitted_baseline += prob * trajectory_gradient(pol, traj, theta, 1.0, &fitted);
  }
  CHECK(total_prob == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((plain - exact).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((with_baseline - exact).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((fitted_baseline - exact).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("returns to go") {
  std::vector<Step> steps(3);
  steps[0].reward = 1.0;
  steps[1].reward = 2.0;
  steps[2].reward = 4.0;
  const Vector r = returns_to_go(steps, 0.5);
  CHECK(r[2] == 4.0);
  CHECK(r[1] == 4.0);
  CHECK(r[0] == 3.0);
  CHECK(returns_to_go(std::span<const Step>(steps.data(), 0)).size() == 0);
  CHECK_THROWS_AS(segment_gradient(Policy::linear(1, 2), steps, Vector::Zero(4), 1.0, Vector::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("Fisher-vector product equals the finite-difference KL Hessian") {
  Rng rng = make_rng(6);
  const int d = 3;
  const int A = 4;
  const Policy pol = Policy::linear(d, A);
  const Vector theta = random_vector(pol.parameter_count(), rng, 0.5);
  Matrix x(d, 7);
  for (int c = 0; c < 7; ++c) x.col(c) = random_vector(d, rng);
  auto f = [&](const Vector& delta) {
    double kl = 0.0;
    for (int c = 0; c < x.cols(); ++c) kl += oracle::linear_kl(theta, theta + delta, x.col(c), A);
    return kl / static_cast<double>(x.cols());
  };
  for (int trial = 0; trial < 3; ++trial) {
    const Vector v = random_vector(pol.parameter_count(), rng);
    const Vector fvp = fisher_vector_product(pol, theta, x, v);
    const Vector fd = oracle::fd_hessian_vector(f, v, 1e-3);
    CHECK((fvp - fd).norm() <= 1e-5 * fd.norm());
  }
  const Vector v = random_vector(pol.parameter_count(), rng);
  CHECK((fisher_vector_product(pol, theta, x, v, 0.3) - fisher_vector_product(pol, theta, x, v) - 0.3 * v).norm() <=
        1e-12);
}

TEST_CASE("Fisher matrix is symmetric positive semidefinite") {
  Rng rng = make_rng(7);
  for (const Policy& pol : {Policy::linear(3, 4), Policy::mlp(3, 4, 4)}) {
    const Vector theta = pol.initial_params(1) + random_vector(pol.parameter_count(), rng, 0.5);
    Matrix x(3, 5);
    for (int c = 0; c < 5; ++c) x.col(c) = random_vector(3, rng);
    const int n = pol.parameter_count();
    Matrix F(n, n);
    for (int i = 0; i < n; ++i) F.col(i) = fisher_vector_product(pol, theta, x, Vector::Unit(n, i));
    CHECK((F - F.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + F.cwiseAbs().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (F + F.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("MLP Fisher matches the Hessian of the library KL") {
  Rng rng = make_rng(8);
  const Policy pol = Policy::mlp(2, 3, 4);
  const Vector theta = pol.initial_params(2) + random_vector(pol.parameter_count(), rng, 0.5);
  Matrix x(2, 5);
  for (int c = 0; c < 5; ++c) x.col(c) = random_vector(2, rng);
  auto f = [&](const Vector& delta) { return mean_kl_divergence(pol, theta, theta + delta, x); };
  const Vector v = random_vector(pol.parameter_count(), rng);
  const Vector fd = oracle::fd_hessian_vector(f, v, 1e-3);
  CHECK((fisher_vector_product(pol, theta, x, v) - fd).norm() <= 1e-5 * fd.norm());
}

TEST_CASE("KL divergence basics") {
  Rng rng = make_rng(9);
  const Policy pol = Policy::linear(2, 3);
  const Vector a = random_vector(pol.parameter_count(), rng);
  const Vector b = random_vector(pol.parameter_count(), rng);
  const Vector obs = random_vector(2, rng);
  CHECK(kl_divergence(pol, a, a, obs) == doctest::Approx(0.0));
  CHECK(kl_divergence(pol, a, b, obs) > 0.0);
  CHECK(kl_divergence(pol, a, b, obs) == doctest::Approx(oracle::linear_kl(a, b, obs, 3)).epsilon(1e-12));
}
