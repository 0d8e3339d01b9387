#pragma once

#include "cola/belief.hpp"
#include "cola/meta.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cola {

/// K-step slices [t, t+K) of M bank trajectories for one anchor mode. A slice
/// is shorter than K (possibly empty) when its trajectory terminated early.
/// Slices view into the bank; the bank must outlive the window.
struct LookaheadWindow {
  int start = 0;
  int length = 0;
  std::vector<std::span<const Step>> segments;

  int state_count() const;
  ObservationBatch states() const;
};

/// One window per anchor mode, in anchor order.
using WindowSet = std::vector<LookaheadWindow>;

/// Samples M distinct trajectories per anchor (uniformly, without replacement)
/// and slices [t, t+K). Throws when t + K exceeds the horizon or a mode holds
/// fewer than M trajectories.
WindowSet sample_window(const TrajectoryBank& bank, int t, int K, int M, Rng& rng);

/// Belief-weighted mean of the segment policy gradients, each using returns to
/// go inside its own segment. With `leave_one_out_baseline`, each segment's
/// return at offset k is centred on the mean return of the other segments of
/// the same mode at that offset.
Vector conjectural_gradient(const Policy& policy, const Belief& belief, const PolicyParams& theta,
                            const WindowSet& windows, double gamma = 1.0, bool leave_one_out_baseline = false);

struct CgResult {
  Vector x;
  double residual = 0.0;  // ||A x - b||
  int iterations = 0;
};

/// Conjugate gradient for A x = b with A symmetric positive definite, given
/// only the product v -> A v. Stops when ||A x - b|| <= tol ||b|| or after
/// max_iterations.
template <typename Avp>
CgResult conjugate_gradient(Avp&& avp, const Vector& b, int max_iterations, double tol) {
  if (!b.allFinite()) throw std::runtime_error("conjugate_gradient: non-finite right-hand side");
  CgResult out;
  out.x = Vector::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) return out;
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int i = 0; i < max_iterations; ++i) {
    if (std::sqrt(rr) <= tol * b_norm) break;
    const Vector ap = avp(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) throw std::runtime_error("conjugate_gradient: non-finite curvature");
    if (pap <= 0.0) break;
    const double alpha = rr / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    out.iterations = i + 1;
  }
  if (!out.x.allFinite()) throw std::runtime_error("conjugate_gradient: non-finite iterate");
  out.residual = (avp(out.x) - b).norm();
  return out;
}

enum class StepMode {
  kFull,        // beta = sqrt(2 delta / dθ'Adθ)
  kLineSearch,  // backtrack from the full step on sampled KL and surrogate gain
  kFixed,       // configured constant capped by the full step
};

std::string to_string(StepMode m);
StepMode step_mode_from_string(const std::string& s);

struct TrustRegionConfig {
  double delta = 0.01;
  int cg_iterations = 10;
  double cg_tolerance = 1e-10;
  double damping = 0.1;
  StepMode step_mode = StepMode::kLineSearch;
  double fixed_step = 0.0;            // absolute beta for kFixed; <= 0 uses the fraction below
  double fixed_step_fraction = 0.5;   // beta = fraction * full step
  int max_backtracks = 10;

  void validate() const;
};

struct TrustRegionStep {
  PolicyParams theta;
  double beta = 0.0;
  double curvature = 0.0;      // dθ' A dθ
  double quadratic_kl = 0.0;   // 0.5 beta^2 dθ' A dθ
  int backtracks = 0;
  bool moved = false;
  std::string diagnostic;
};

/// Returns true when a candidate passes the line-search acceptance test.
using StepCheck = std::function<bool(const PolicyParams& candidate)>;

TrustRegionStep trust_region_step(const PolicyParams& theta, const Vector& dtheta,
                                  const std::function<Vector(const Vector&)>& avp, const TrustRegionConfig& cfg,
                                  const StepCheck& check = {});

/// Point at which each step's lookahead problem is linearised.
enum class Expansion {
  kMeta,     // theta_{t+1} = Phi_t(meta theta); banks stay on-policy for the gradient
  kCurrent,  // theta_{t+1} solves the problem around theta_t; steps accumulate
};

std::string to_string(Expansion e);
Expansion expansion_from_string(const std::string& s);

struct LookaheadConfig {
  int K = 10;
  int M = 8;
  double gamma = 1.0;
  bool leave_one_out_baseline = true;
  Expansion expansion = Expansion::kMeta;
  TrustRegionConfig trust_region;
};

struct LookaheadResult {
  PolicyParams theta;
  double grad_norm = 0.0;
  double cg_residual = 0.0;
  int cg_iterations = 0;
  double beta = 0.0;
  double quadratic_kl = 0.0;
  double sampled_kl = 0.0;  // weighted mean KL(theta || theta') on the window states
  bool moved = false;
  std::string diagnostic;
};

/**
 * Solves  max g'(θ' - θ)  s.t.  ½ (θ' - θ)' A (θ' - θ) <= δ  where g is the
 * weighted segment gradient and A the weighted Fisher matrix of the window
 * states. Shared by the conjectural update (belief weights over bank windows)
 * and the oracle (unit weight over authentic rollouts). Modes with zero weight
 * are skipped entirely.
 */
LookaheadResult lookahead_update(const Policy& policy, const PolicyParams& theta, const Vector& weights,
                                 const WindowSet& windows, const LookaheadConfig& cfg);

struct ColaConfig {
  LookaheadConfig lookahead;
  double likelihood_floor = 1e-6;
  bool use_filter = true;  // false: belief is the raw classifier output each step
  bool log_drift = false;
  /// When set, the gradient and Fisher weights use this belief instead of the
  /// filtered one (knowledge-transfer probes).
  std::optional<Belief> gradient_belief;
};

struct StepLog {
  int t = 0;
  Belief belief;
  double grad_norm = 0.0;
  double cg_residual = 0.0;
  double beta = 0.0;
  double sampled_kl = 0.0;
  double reward = 0.0;
  double speed = 0.0;
  int true_label = 0;
  int predicted_label = 0;
  bool adapted = false;
  double drift_kl = 0.0;
};

struct EpisodeResult {
  Trajectory trajectory;
  std::vector<StepLog> logs;
  AccuracyRecord accuracy;
  PolicyParams final_theta;
};

/// Per-episode random streams; every policy evaluated on (seed, episode) sees
/// the same environment stream.
struct EpisodeStreams {
  Rng env;
  Rng policy;
  Rng window;
  Rng classifier;
  Rng oracle;
  static EpisodeStreams make(std::uint64_t seed, std::uint64_t episode);
};

/// Online conjectural lookahead adaptation for one episode.
EpisodeResult cola_episode(const Policy& policy, const PolicyParams& meta_theta, const ModeClassifier& classifier,
                           const TrajectoryBank& bank, Environment& env, const ColaConfig& cfg, std::uint64_t seed,
                           std::uint64_t episode);

}  // namespace cola
