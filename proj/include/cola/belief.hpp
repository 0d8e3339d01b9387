#pragma once

#include "cola/hmmdp.hpp"

#include <memory>
#include <vector>

namespace cola {

/// Probability vector over the anchor modes.
using Belief = Vector;

Belief uniform_belief(int n);
/// Throws std::invalid_argument unless b is a probability vector (tolerance 1e-12).
void validate_probabilities(const Vector& b, const char* what = "belief");

/// 1 when z_img is strictly closer to z_r than to z_c, else 0.
int true_label(const Mode& z_img, const Mode& z_r, const Mode& z_c);
/// Index of the closest anchor; ties go to the lowest index.
int nearest_anchor(const Mode& z, const std::vector<Mode>& anchors);
/// argmax with ties broken toward the lowest index.
int argmax_label(const Vector& p);

struct BeliefUpdate {
  Belief belief;
  bool degenerate = false;  // zero normaliser; the prior was kept
};

/// b_t(z) proportional to b_{t-1}(z) f(z; s_t).
BeliefUpdate bayes_update(const Belief& prior, const Vector& likelihood);
/// max(f, floor) entrywise; a floor of 0 leaves f untouched.
Vector floor_likelihood(const Vector& f, double floor);

struct LabeledSample {
  Observation obs;
  int label = 0;
};

/// Multinomial logistic discriminator on [x, x^2] features, standardised.
class LikelihoodModel {
 public:
  LikelihoodModel() = default;
  LikelihoodModel(Vector mean, Vector scale, Matrix weights);

  /// Probability vector over the anchor modes.
  Vector operator()(const Observation& obs) const;
  int class_count() const { return static_cast<int>(weights_.rows()); }
  int observation_dim() const { return static_cast<int>(mean_.size() / 2); }

  const Vector& feature_mean() const { return mean_; }
  const Vector& feature_scale() const { return scale_; }
  const Matrix& weights() const { return weights_; }

  double holdout_accuracy = 0.0;
  double train_accuracy = 0.0;

  static Vector expand(const Observation& obs);

 private:
  Vector mean_;
  Vector scale_;
  Matrix weights_;  // classes x (features + 1)
};

struct LikelihoodTrainConfig {
  double ridge = 1e-3;
  int max_newton_iterations = 50;
  double tolerance = 1e-10;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 7;
};

/// Cross-entropy fit by damped Newton iterations. Throws when fewer than two
/// labels are present.
LikelihoodModel train_likelihood(const std::vector<LabeledSample>& samples, const LikelihoodTrainConfig& cfg = {});

/// Source of f(.; s_t) during an episode. Synthetic sources may use the true
/// label and a random stream; trained models ignore both.
class ModeClassifier {
 public:
  virtual ~ModeClassifier() = default;
  virtual Vector probabilities(const Observation& obs, int true_label, Rng& rng) const = 0;
  virtual int class_count() const = 0;
};

class LogisticClassifier final : public ModeClassifier {
 public:
  explicit LogisticClassifier(LikelihoodModel model) : model_(std::move(model)) {}
  Vector probabilities(const Observation& obs, int, Rng&) const override { return model_(obs); }
  int class_count() const override { return model_.class_count(); }
  const LikelihoodModel& model() const { return model_; }

 private:
  LikelihoodModel model_;
};

/// Reports the true label with probability `accuracy`, otherwise a uniformly
/// chosen wrong label; the output puts `accuracy` mass on the reported label.
class SyntheticClassifier final : public ModeClassifier {
 public:
  SyntheticClassifier(int classes, double accuracy);
  Vector probabilities(const Observation& obs, int true_label, Rng& rng) const override;
  int class_count() const override { return classes_; }

 private:
  int classes_;
  double accuracy_;
};

/// Per-step predicted and true labels of one episode.
struct AccuracyRecord {
  std::vector<int> predicted;
  std::vector<int> truth;

  int size() const { return static_cast<int>(truth.size()); }
};

/// Fraction of episodes whose prediction at step t is correct. Every record
/// must contain step t.
double transient_accuracy(const std::vector<AccuracyRecord>& records, int t);
/// As transient_accuracy, over only the episodes that reached step t; NaN if none did.
double transient_accuracy_reached(const std::vector<AccuracyRecord>& records, int t);
/// Correct predictions over all recorded steps of all episodes.
double episodic_accuracy(const std::vector<AccuracyRecord>& records);

}  // namespace cola
