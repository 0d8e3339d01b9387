#include "cola/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace cola {

namespace {

// [X; 1^T]
Matrix augment(const ObservationBatch& obs) {
  Matrix x(obs.rows() + 1, obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(1).setOnes();
  return x;
}

}  // namespace

std::string to_string(PolicyFamily f) { return f == PolicyFamily::kLinear ? "linear" : "mlp"; }

PolicyFamily policy_family_from_string(const std::string& s) {
  if (s == "linear") return PolicyFamily::kLinear;
  if (s == "mlp") return PolicyFamily::kMlp;
  throw std::invalid_argument("unknown policy family '" + s + "'");
}

Policy Policy::linear(int obs_dim, int n_actions) {
  if (obs_dim <= 0 || n_actions <= 1) throw std::invalid_argument("policy needs obs_dim > 0 and at least 2 actions");
  return Policy(PolicyFamily::kLinear, obs_dim, n_actions, 0);
}

Policy Policy::mlp(int obs_dim, int n_actions, int hidden) {
  if (obs_dim <= 0 || n_actions <= 1 || hidden <= 0) throw std::invalid_argument("invalid MLP policy dimensions");
  return Policy(PolicyFamily::kMlp, obs_dim, n_actions, hidden);
}

int Policy::parameter_count() const {
  if (family_ == PolicyFamily::kLinear) return n_actions_ * (obs_dim_ + 1);
  return hidden_ * (obs_dim_ + 1) + n_actions_ * (hidden_ + 1);
}

PolicyParams Policy::initial_params(std::uint64_t seed) const {
  PolicyParams theta = PolicyParams::Zero(parameter_count());
  if (family_ == PolicyFamily::kMlp) {
    Rng rng = make_rng(seed, {tag(Stream::kTraining), 0x1417});
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(obs_dim_ + 1)));
    for (int i = 0; i < hidden_ * (obs_dim_ + 1); ++i) theta[i] = normal(rng);
  }
  return theta;
}

void Policy::check(const PolicyParams& theta, const ObservationBatch& obs) const {
  if (theta.size() != parameter_count())
    throw std::invalid_argument("parameter vector has size " + std::to_string(theta.size()) + ", expected " +
                                std::to_string(parameter_count()));
  if (obs.rows() != obs_dim_)
    throw std::invalid_argument("observation has dimension " + std::to_string(obs.rows()) + ", expected " +
                                std::to_string(obs_dim_));
}

Matrix Policy::logits(const PolicyParams& theta, const ObservationBatch& obs) const {
  check(theta, obs);
  const Matrix x = augment(obs);
  if (family_ == PolicyFamily::kLinear) {
    Eigen::Map<const Matrix> w(theta.data(), n_actions_, obs_dim_ + 1);
    return w * x;
  }
  Eigen::Map<const Matrix> w1(theta.data(), hidden_, obs_dim_ + 1);
  Eigen::Map<const Matrix> w2(theta.data() + hidden_ * (obs_dim_ + 1), n_actions_, hidden_ + 1);
  const Matrix h = (w1 * x).array().tanh().matrix();
  return w2.leftCols(hidden_) * h + w2.col(hidden_).replicate(1, obs.cols());
}

Matrix Policy::logits_jvp(const PolicyParams& theta, const ObservationBatch& obs, const Vector& v) const {
  check(theta, obs);
  if (v.size() != parameter_count()) throw std::invalid_argument("direction has wrong dimension");
  const Matrix x = augment(obs);
  if (family_ == PolicyFamily::kLinear) {
    Eigen::Map<const Matrix> dw(v.data(), n_actions_, obs_dim_ + 1);
    return dw * x;
  }
  const int off = hidden_ * (obs_dim_ + 1);
  Eigen::Map<const Matrix> w1(theta.data(), hidden_, obs_dim_ + 1);
  Eigen::Map<const Matrix> w2(theta.data() + off, n_actions_, hidden_ + 1);
  Eigen::Map<const Matrix> dw1(v.data(), hidden_, obs_dim_ + 1);
  Eigen::Map<const Matrix> dw2(v.data() + off, n_actions_, hidden_ + 1);
  const Matrix h = (w1 * x).array().tanh().matrix();
  const Matrix dh = ((1.0 - h.array().square()) * (dw1 * x).array()).matrix();
  return dw2.leftCols(hidden_) * h + dw2.col(hidden_).replicate(1, obs.cols()) + w2.leftCols(hidden_) * dh;
}

Vector Policy::logits_vjp(const PolicyParams& theta, const ObservationBatch& obs, const Matrix& u) const {
  check(theta, obs);
  const Matrix x = augment(obs);
  Vector g(parameter_count());
  if (family_ == PolicyFamily::kLinear) {
    Eigen::Map<Matrix>(g.data(), n_actions_, obs_dim_ + 1) = u * x.transpose();
    return g;
  }
  const int off = hidden_ * (obs_dim_ + 1);
  Eigen::Map<const Matrix> w1(theta.data(), hidden_, obs_dim_ + 1);
  Eigen::Map<const Matrix> w2(theta.data() + off, n_actions_, hidden_ + 1);
  const Matrix h = (w1 * x).array().tanh().matrix();
  Eigen::Map<Matrix> gw2(g.data() + off, n_actions_, hidden_ + 1);
  gw2.leftCols(hidden_) = u * h.transpose();
  gw2.col(hidden_) = u.rowwise().sum();
  const Matrix gz = ((1.0 - h.array().square()) * (w2.leftCols(hidden_).transpose() * u).array()).matrix();
  Eigen::Map<Matrix>(g.data(), hidden_, obs_dim_ + 1) = gz * x.transpose();
  return g;
}

Vector action_distribution(const Policy& policy, const PolicyParams& theta, const Vector& obs) {
  return softmax(policy.logits(theta, as_batch(obs)).col(0));
}

Matrix action_distribution(const Policy& policy, const PolicyParams& theta, const ObservationBatch& obs) {
  return softmax_columns(policy.logits(theta, obs));
}

int sample_action(const Policy& policy, const PolicyParams& theta, const Vector& obs, Rng& rng) {
  const Vector p = action_distribution(policy, theta, obs);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double c = 0.0;
  for (int a = 0; a < p.size(); ++a) {
    c += p[a];
    if (r < c) return a;
  }
  return static_cast<int>(p.size()) - 1;
}

Vector log_prob_grad(const Policy& policy, const PolicyParams& theta, const Vector& obs, int action) {
  if (action < 0 || action >= policy.action_count()) throw std::out_of_range("action outside the catalog");
  const ObservationBatch batch = as_batch(obs);
  Matrix u = -softmax(policy.logits(theta, batch).col(0));
  u(action, 0) += 1.0;
  return policy.logits_vjp(theta, batch, u);
}

namespace {

// Row-wise log-softmax of each column.
Matrix log_softmax_columns(const Matrix& logits) {
  const Eigen::RowVectorXd m = logits.colwise().maxCoeff();
  const Matrix shifted = logits.rowwise() - m;
  const Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log().matrix();
  return shifted.rowwise() - lse;
}

}  // namespace

double kl_divergence(const Policy& policy, const PolicyParams& theta, const PolicyParams& theta_prime,
                     const Vector& obs) {
  return mean_kl_divergence(policy, theta, theta_prime, as_batch(obs));
}

double mean_kl_divergence(const Policy& policy, const PolicyParams& theta, const PolicyParams& theta_prime,
                          const ObservationBatch& obs) {
  if (obs.cols() == 0) return 0.0;
  const Matrix lp = log_softmax_columns(policy.logits(theta, obs));
  const Matrix lq = log_softmax_columns(policy.logits(theta_prime, obs));
  const double total = (lp.array().exp() * (lp - lq).array()).sum();
  return std::max(0.0, total / static_cast<double>(obs.cols()));
}

Vector fisher_vector_product(const Policy& policy, const PolicyParams& theta, const ObservationBatch& obs,
                             const Vector& v, double damping) {
  if (v.size() != policy.parameter_count()) throw std::invalid_argument("fisher_vector_product: |v| != d");
  if (obs.cols() == 0) return damping * v;
  const Matrix p = action_distribution(policy, theta, obs);
  const Matrix jv = policy.logits_jvp(theta, obs, v);
  const Matrix pjv = (p.array() * jv.array()).matrix();
  const Matrix fjv = pjv - (p.array().rowwise() * pjv.colwise().sum().array()).matrix();
  return policy.logits_vjp(theta, obs, fjv) / static_cast<double>(obs.cols()) + damping * v;
}

}  // namespace cola
