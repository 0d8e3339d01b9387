#include "cola/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cola {

Belief uniform_belief(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_belief: need at least one mode");
  return Belief::Constant(n, 1.0 / n);
}

void validate_probabilities(const Vector& b, const char* what) {
  if (b.size() == 0 || !b.allFinite() || (b.array() < 0.0).any() || std::abs(b.sum() - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + " is not a probability vector");
}

int true_label(const Mode& z_img, const Mode& z_r, const Mode& z_c) {
  return (z_img.vec() - z_r.vec()).norm() < (z_img.vec() - z_c.vec()).norm() ? 1 : 0;
}

int nearest_anchor(const Mode& z, const std::vector<Mode>& anchors) {
  if (anchors.empty()) throw std::invalid_argument("nearest_anchor: no anchors");
  int best = 0;
  double best_d = (z.vec() - anchors[0].vec()).norm();
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    const double d = (z.vec() - anchors[i].vec()).norm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int argmax_label(const Vector& p) {
  Eigen::Index i = 0;
  p.maxCoeff(&i);  // Eigen returns the first maximum
  return static_cast<int>(i);
}

BeliefUpdate bayes_update(const Belief& prior, const Vector& likelihood) {
  if (prior.size() != likelihood.size()) throw std::invalid_argument("bayes_update: size mismatch");
  const Vector joint = prior.cwiseProduct(likelihood);
  const double z = joint.sum();
  if (!(z > 0.0) || !std::isfinite(z)) return {prior, true};
  return {joint / z, false};
}

Vector floor_likelihood(const Vector& f, double floor) {
  if (floor <= 0.0) return f;
  return f.cwiseMax(floor);
}

LikelihoodModel::LikelihoodModel(Vector mean, Vector scale, Matrix weights)
    : mean_(std::move(mean)), scale_(std::move(scale)), weights_(std::move(weights)) {}

Vector LikelihoodModel::expand(const Observation& obs) {
  Vector f(2 * obs.size());
  f << obs, obs.array().square().matrix();
  return f;
}

Vector LikelihoodModel::operator()(const Observation& obs) const {
  if (2 * obs.size() != mean_.size()) throw std::invalid_argument("LikelihoodModel: observation dimension mismatch");
  Vector x(mean_.size() + 1);
  x << ((expand(obs) - mean_).array() / scale_.array()).matrix(), 1.0;
  return softmax(weights_ * x);
}

LikelihoodModel train_likelihood(const std::vector<LabeledSample>& samples, const LikelihoodTrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_likelihood: no samples");
  int classes = 0;
  for (const auto& s : samples) {
    if (s.label < 0) throw std::invalid_argument("train_likelihood: negative label");
    classes = std::max(classes, s.label + 1);
  }
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2)
    throw std::invalid_argument("train_likelihood: samples contain a single class");

  // Deterministic shuffle, then hold out the tail.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed, {tag(Stream::kClassifier)});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_hold = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(samples.size()));
  if (n_hold >= samples.size()) n_hold = 0;
  const std::size_t n_train = samples.size() - n_hold;

  const auto dim = static_cast<Eigen::Index>(2 * samples.front().obs.size());
  Matrix x(dim + 1, static_cast<Eigen::Index>(n_train));
  Matrix y = Matrix::Zero(classes, static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& s = samples[order[i]];
    x.col(static_cast<Eigen::Index>(i)).head(dim) = LikelihoodModel::expand(s.obs);
    y(s.label, static_cast<Eigen::Index>(i)) = 1.0;
  }
  const Vector mean = x.topRows(dim).rowwise().mean();
  Vector scale = ((x.topRows(dim).colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    if (!(scale[i] > 1e-12)) scale[i] = 1.0;
  x.topRows(dim) = ((x.topRows(dim).colwise() - mean).array().colwise() / scale.array()).matrix();
  x.bottomRows(1).setOnes();

  const Eigen::Index p = dim + 1;
  const Eigen::Index d = classes * p;
  const double n = static_cast<double>(n_train);
  Matrix w = Matrix::Zero(classes, p);
  auto loss = [&](const Matrix& wm) {
    const Matrix probs = softmax_columns(wm * x);
    double l = -(y.array() * probs.array().max(1e-300).log()).sum() / n;
    return l + 0.5 * cfg.ridge * wm.squaredNorm();
  };
  double current = loss(w);
  for (int it = 0; it < cfg.max_newton_iterations; ++it) {
    const Matrix probs = softmax_columns(w * x);
    const Matrix resid = probs - y;
    Matrix grad_m = resid * x.transpose() / n + cfg.ridge * w;
    const Vector grad = Eigen::Map<const Vector>(grad_m.data(), d);
    // Hessian blocks: H[(c,i),(k,j)] = mean_n p_c (delta_ck - p_k) x_i x_j, column-major over (c, i).
    Matrix hess = Matrix::Zero(d, d);
    for (Eigen::Index s = 0; s < x.cols(); ++s) {
      const Vector pc = probs.col(s);
      const Matrix sm = Matrix(pc.asDiagonal()) - pc * pc.transpose();
      const Matrix xx = x.col(s) * x.col(s).transpose();
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) hess.block(i * classes, j * classes, classes, classes) += sm * xx(i, j);
    }
    hess /= n;
    hess.diagonal().array() += cfg.ridge;
    const Vector step = hess.ldlt().solve(grad);
    double t = 1.0;
    Matrix next = w;
    double next_loss = current;
    for (int ls = 0; ls < 30; ++ls) {
      next = w - t * Eigen::Map<const Matrix>(step.data(), classes, p);
      next_loss = loss(next);
      if (next_loss <= current) break;
      t *= 0.5;
    }
    const double improvement = current - next_loss;
    w = next;
    current = next_loss;
    if (grad.norm() < cfg.tolerance || improvement < cfg.tolerance) break;
  }

  LikelihoodModel model(mean, scale, w);
  auto accuracy = [&](std::size_t from, std::size_t to) {
    if (to <= from) return 0.0;
    int correct = 0;
    for (std::size_t i = from; i < to; ++i) {
      const auto& s = samples[order[i]];
      correct += argmax_label(model(s.obs)) == s.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(to - from);
  };
  model.train_accuracy = accuracy(0, n_train);
  model.holdout_accuracy = n_hold > 0 ? accuracy(n_train, samples.size()) : model.train_accuracy;
  return model;
}

SyntheticClassifier::SyntheticClassifier(int classes, double accuracy) : classes_(classes), accuracy_(accuracy) {
  if (classes < 2) throw std::invalid_argument("SyntheticClassifier: need at least two classes");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("SyntheticClassifier: accuracy outside [0,1]");
}

Vector SyntheticClassifier::probabilities(const Observation&, int true_label, Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  int reported = true_label;
  if (draw >= accuracy_) {
    std::uniform_int_distribution<int> other(0, classes_ - 2);
    reported = other(rng);
    if (reported >= true_label) ++reported;
  }
  Vector f = Vector::Constant(classes_, (1.0 - accuracy_) / (classes_ - 1));
  f[reported] = accuracy_;
  return f;
}

double transient_accuracy(const std::vector<AccuracyRecord>& records, int t) {
  if (records.empty()) throw std::invalid_argument("transient_accuracy: no records");
  int correct = 0;
  for (const auto& r : records) {
    if (t < 0 || t >= r.size()) throw std::out_of_range("transient_accuracy: episode lacks step t");
    correct += r.predicted[static_cast<std::size_t>(t)] == r.truth[static_cast<std::size_t>(t)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double transient_accuracy_reached(const std::vector<AccuracyRecord>& records, int t) {
  int correct = 0;
  int total = 0;
  for (const auto& r : records) {
    if (t < 0 || t >= r.size()) continue;
    ++total;
    correct += r.predicted[static_cast<std::size_t>(t)] == r.truth[static_cast<std::size_t>(t)] ? 1 : 0;
  }
  return total > 0 ? static_cast<double>(correct) / total : std::numeric_limits<double>::quiet_NaN();
}

double episodic_accuracy(const std::vector<AccuracyRecord>& records) {
  long long correct = 0;
  long long total = 0;
  for (const auto& r : records) {
    for (int t = 0; t < r.size(); ++t)
      correct += r.predicted[static_cast<std::size_t>(t)] == r.truth[static_cast<std::size_t>(t)] ? 1 : 0;
    total += r.size();
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace cola
