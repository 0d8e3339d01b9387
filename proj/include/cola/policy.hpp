#pragma once

#include "cola/common.hpp"

#include <string>

namespace cola {

/// Flat parameter vector of a policy.
using PolicyParams = Vector;

enum class PolicyFamily { kLinear, kMlp };

std::string to_string(PolicyFamily f);
PolicyFamily policy_family_from_string(const std::string& s);

/**
 * Softmax policy over a discrete action catalog.
 *
 * The linear family scores action a as w_a . [x; 1]. The MLP family adds one
 * tanh hidden layer. Both expose the logit Jacobian through jvp/vjp products,
 * which is all the gradient and Fisher computations need.
 *
 * Parameter layout is column-major: for the linear family theta = vec(W) with
 * W of shape (actions x (obs_dim + 1)); for the MLP theta = [vec(W1); vec(W2)]
 * with W1 (hidden x (obs_dim + 1)) and W2 (actions x (hidden + 1)).
 */
class Policy {
 public:
  static Policy linear(int obs_dim, int n_actions);
  static Policy mlp(int obs_dim, int n_actions, int hidden);

  PolicyFamily family() const { return family_; }
  int observation_dim() const { return obs_dim_; }
  int action_count() const { return n_actions_; }
  int hidden() const { return hidden_; }
  int parameter_count() const;

  /// Zero for the linear family; small Gaussian hidden weights for the MLP
  /// (output weights start at zero so the initial policy is uniform).
  PolicyParams initial_params(std::uint64_t seed = 0) const;

  /// Logits for each column of `obs` (actions x N).
  Matrix logits(const PolicyParams& theta, const ObservationBatch& obs) const;
  /// Directional derivative of the logits along v, per column (actions x N).
  Matrix logits_jvp(const PolicyParams& theta, const ObservationBatch& obs, const Vector& v) const;
  /// Sum over columns of J_n^T u_n where J_n is the logit Jacobian of column n.
  Vector logits_vjp(const PolicyParams& theta, const ObservationBatch& obs, const Matrix& u) const;

  void check(const PolicyParams& theta, const ObservationBatch& obs) const;

 private:
  Policy(PolicyFamily f, int obs_dim, int n_actions, int hidden)
      : family_(f), obs_dim_(obs_dim), n_actions_(n_actions), hidden_(hidden) {}

  PolicyFamily family_;
  int obs_dim_;
  int n_actions_;
  int hidden_;
};

/// pi(. | s; theta).
Vector action_distribution(const Policy& policy, const PolicyParams& theta, const Vector& obs);
/// Probabilities for each column of `obs` (actions x N).
Matrix action_distribution(const Policy& policy, const PolicyParams& theta, const ObservationBatch& obs);

int sample_action(const Policy& policy, const PolicyParams& theta, const Vector& obs, Rng& rng);

/// Gradient of log pi(a | s; theta) with respect to theta.
Vector log_prob_grad(const Policy& policy, const PolicyParams& theta, const Vector& obs, int action);

/// D_KL(pi(.|s; theta) || pi(.|s; theta_prime)).
double kl_divergence(const Policy& policy, const PolicyParams& theta, const PolicyParams& theta_prime,
                     const Vector& obs);
/// Average of kl_divergence over the columns of `obs`.
double mean_kl_divergence(const Policy& policy, const PolicyParams& theta, const PolicyParams& theta_prime,
                          const ObservationBatch& obs);

/**
 * (A + damping I) v, where A is the Hessian of the mean KL divergence over
 * `obs` with respect to the second argument, taken at theta' = theta. For a
 * softmax policy this is the Fisher information J^T (diag(p) - p p^T) J and is
 * evaluated matrix-free.
 */
Vector fisher_vector_product(const Policy& policy, const PolicyParams& theta, const ObservationBatch& obs,
                             const Vector& v, double damping = 0.0);

inline ObservationBatch as_batch(const Vector& obs) { return obs; }

}  // namespace cola
