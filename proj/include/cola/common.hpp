#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cola {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Column-stacked observations, one observation per column.
using ObservationBatch = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// Derives an independent generator from a root seed and a list of stream tags.
/// Streams with different tags never share state, so the number of draws made
/// on one stream cannot perturb another.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Stream tags used across the library.
enum class Stream : std::uint64_t {
  kEnvironment = 1,
  kPolicy = 2,
  kWindow = 3,
  kClassifier = 4,
  kOracle = 5,
  kTraining = 6,
  kBank = 7,
};

inline constexpr std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

/// FNV-1a over raw bytes.
class Fnv1a {
 public:
  Fnv1a& add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& add(std::string_view s) { return add(s.data(), s.size()); }
  Fnv1a& add(double x) { return add(&x, sizeof x); }
  Fnv1a& add(std::int64_t x) { return add(&x, sizeof x); }
  Fnv1a& add(const Vector& v) { return add(v.data(), sizeof(double) * static_cast<std::size_t>(v.size())); }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t h);

/// Numerically stable softmax of a logit vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar shift = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = (logits.array() - shift).exp().matrix();
  return p / p.sum();
}

/// Column-wise softmax over a logit matrix (actions x samples).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_columns(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p =
      (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace cola
