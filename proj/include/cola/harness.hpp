#pragma once

#include "cola/config.hpp"
#include "cola/io.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cola {

namespace fs = std::filesystem;

/// Cumulative per-step regret averaged over paired episodes.
struct RegretSeries {
  Vector values;  // Reg(1..T)
  std::string policy;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;

  int T() const { return static_cast<int>(values.size()); }
};

/// Mean over episodes of cumsum(oracle - policy). Series are paired by index
/// and must share one length.
RegretSeries regret(const std::vector<Vector>& oracle_rewards, const std::vector<Vector>& policy_rewards);

struct SublinearityReport {
  int T = 0;
  double average_half = 0.0;  // Reg(T/2) / (T/2)
  double average_full = 0.0;  // Reg(T) / T
  double tail_slope = 0.0;    // least-squares slope of Reg over the last half
  bool sublinear = false;     // average_full < average_half
};

/// Requires T >= 20.
SublinearityReport sublinearity_stat(const RegretSeries& reg);

struct BootstrapInterval {
  double mean = 0.0;  // mean of a - b
  double lo = 0.0;
  double hi = 0.0;
  int resamples = 0;
};

/// Paired percentile bootstrap of mean(a - b); a and b are indexed by episode.
BootstrapInterval bootstrap_mean_difference(const std::vector<double>& a, const std::vector<double>& b,
                                            int resamples = 10000, std::uint64_t seed = 2024, double level = 0.95);

/// Files written by the training subcommands, relative to the output directory.
namespace artifact {
inline constexpr const char* kMetaPolicy = "meta_policy.txt";
inline constexpr const char* kBank = "bank.csv";
inline constexpr const char* kMetaCurve = "meta_train.csv";
inline constexpr const char* kSamples = "classifier_samples.csv";
inline constexpr const char* kClassifier = "classifier.txt";
inline constexpr const char* kBasePolicy = "base_policy.txt";
inline constexpr const char* kQTables = "q_tables.txt";
}  // namespace artifact

struct Artifacts {
  Policy policy = Policy::linear(1, 2);
  PolicyParams meta_theta;
  TrajectoryBank bank;
  LikelihoodModel likelihood;
  PolicyParams base_theta;
  std::vector<QTable> q_tables;
  std::map<std::string, std::uint64_t> hashes;  // file name -> content hash

  enum Need : unsigned { kMeta = 1, kClassifier = 2, kBaselines = 4, kAll = 7 };
  /// Loads what `need` asks for; throws std::runtime_error naming any missing file.
  static Artifacts load(const fs::path& dir, const ExperimentConfig& cfg, unsigned need);
  /// "name:hash;..." in file-name order.
  std::string fingerprint() const;
};

/// Meta-training plus trajectory bank; writes policy, bank and learning curve.
MetaTrainReport stage_meta_train(const ExperimentConfig& cfg, const fs::path& out_dir);

/// Frames from meta-policy rollouts on the dynamic schedule, labelled by the
/// nearest anchor.
std::vector<LabeledSample> collect_classifier_samples(const ExperimentConfig& cfg, const Policy& policy,
                                                      const PolicyParams& theta);
LikelihoodModel stage_train_classifier(const ExperimentConfig& cfg, const fs::path& out_dir);

struct BaselineArtifacts {
  PolicyParams base_theta;
  std::vector<QTable> q_tables;
};
/// Single-environment policy on the dynamic schedule and one Q-table per anchor.
BaselineArtifacts stage_train_baselines(const ExperimentConfig& cfg, const fs::path& out_dir);

/// CSV preamble naming the config and artifact hashes.
std::string csv_preamble(const ExperimentConfig& cfg, const std::string& fingerprint);

// ---- experiments -------------------------------------------------------

inline const std::vector<std::string>& policy_ids() {
  static const std::vector<std::string> ids{"cola", "base", "maml", "qmix", "oracle"};
  return ids;
}

struct EpisodeRow {
  std::uint64_t seed = 0;
  int episode = 0;
  std::string policy;
  double reward = 0.0;
  int length = 0;
  double mean_speed = 0.0;
};

struct PolicySummary {
  std::string policy;
  double mean = 0.0;
  double stddev = 0.0;
  BootstrapInterval cola_minus;  // COLA minus this policy
  RegretSeries regret;
  SublinearityReport shape;
};

struct ComparisonResult {
  std::vector<EpisodeRow> rows;  // ordered by seed, episode, policy
  std::vector<PolicySummary> summary;
  int horizon = 0;

  const PolicySummary& of(const std::string& policy) const;
  /// Per-episode rewards of one policy in row order.
  std::vector<double> rewards(const std::string& policy) const;
};

/// COLA, base, MAML, Q-mix and oracle on the dynamic schedule over shared seeds.
ComparisonResult run_comparison(const ExperimentConfig& cfg, const Artifacts& art,
                                const std::vector<std::uint64_t>& seeds, int episodes, int workers);
void write_comparison(const ComparisonResult& res, const ExperimentConfig& cfg, const Artifacts& art,
                      const fs::path& out_dir, bool plots);

struct AblationStep {
  int t = 0;
  double filter_accuracy = 0.0;   // transient accuracy among episodes alive at t
  double vanilla_accuracy = 0.0;
  int alive = 0;
};

struct AblationResult {
  std::vector<AblationStep> steps;
  double filter_episodic = 0.0;
  double vanilla_episodic = 0.0;
  double filter_reward = 0.0;
  double vanilla_reward = 0.0;
  int episodes = 0;

  /// Fraction of steps t >= t_min where filter transient accuracy >= vanilla.
  double transient_win_fraction(int t_min = 5) const;
};

/// COLA with the Bayes filter versus the raw classifier output as belief.
AblationResult ablate_filter(const ExperimentConfig& cfg, const Artifacts& art, const ModeClassifier& classifier,
                             const std::vector<std::uint64_t>& seeds, int episodes, int workers);
void write_ablation(const AblationResult& res, const ExperimentConfig& cfg, const std::string& fingerprint,
                    const fs::path& out_dir, bool plots);

struct SweepRow {
  int K = 0;
  std::string condition;  // cloudy, rainy, dynamic
  double mean = 0.0;
  double stddev = 0.0;
  int episodes = 0;
};

/// COLA per K on both fixed anchors and the dynamic schedule.
std::vector<SweepRow> sweep_lookahead(const ExperimentConfig& cfg, const Artifacts& art, const std::vector<int>& Ks,
                                      const std::vector<std::uint64_t>& seeds, int episodes, int workers);
void write_sweep(const std::vector<SweepRow>& rows, const ExperimentConfig& cfg, const std::string& fingerprint,
                 const fs::path& out_dir);

struct TransferRow {
  std::string true_mode;  // cloudy or rainy
  std::string gradient;   // cloudy or rainy
  double mean_speed = 0.0;
  double mean_reward = 0.0;
  int episodes = 0;
};

/// Adapts with a one-hot gradient belief on each fixed anchor.
std::vector<TransferRow> knowledge_transfer(const ExperimentConfig& cfg, const Artifacts& art,
                                            std::uint64_t seed, int episodes, int workers);
void write_transfer(const std::vector<TransferRow>& rows, const ExperimentConfig& cfg, const std::string& fingerprint,
                    const fs::path& out_dir);

/// Standalone SVG line chart; each series is drawn against its index.
std::string svg_line_chart(const std::string& title, const std::vector<std::pair<std::string, Vector>>& series,
                           const std::string& x_label, const std::string& y_label);

}  // namespace cola
