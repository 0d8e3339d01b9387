#include "cola/harness.hpp"

#include "cola/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cola {

namespace {

double mean_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

struct Job {
  std::uint64_t seed;
  int episode;
};

std::vector<Job> jobs_for(const std::vector<std::uint64_t>& seeds, int episodes) {
  if (seeds.empty()) throw std::invalid_argument("seed list must not be empty");
  if (episodes < 1) throw std::invalid_argument("episode count must be positive");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Job> jobs;
  for (auto s : sorted)
    for (int e = 0; e < episodes; ++e) jobs.push_back({s, e});
  return jobs;
}

ColaConfig cola_config(const ExperimentConfig& cfg) {
  ColaConfig c = cfg.cola;
  c.likelihood_floor = cfg.classifier.likelihood_floor;
  return c;
}

std::string modes_label(int i) { return i == 0 ? "cloudy" : "rainy"; }

}  // namespace

RegretSeries regret(const std::vector<Vector>& oracle_rewards, const std::vector<Vector>& policy_rewards) {
  if (oracle_rewards.size() != policy_rewards.size() || oracle_rewards.empty())
    throw std::invalid_argument("regret: need the same non-zero number of oracle and policy episodes");
  const Eigen::Index T = oracle_rewards.front().size();
  RegretSeries out;
  out.values = Vector::Zero(T);
  for (std::size_t i = 0; i < oracle_rewards.size(); ++i) {
    if (oracle_rewards[i].size() != T || policy_rewards[i].size() != T)
      throw std::invalid_argument("regret: reward series lengths differ");
    double acc = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      acc += oracle_rewards[i][t] - policy_rewards[i][t];
      out.values[t] += acc;
    }
  }
  out.values /= static_cast<double>(oracle_rewards.size());
  out.episodes = static_cast<int>(oracle_rewards.size());
  return out;
}

SublinearityReport sublinearity_stat(const RegretSeries& reg) {
  const int T = reg.T();
  if (T < 20) throw std::invalid_argument("sublinearity_stat: need T >= 20");
  SublinearityReport r;
  r.T = T;
  const int half = T / 2;
  r.average_half = reg.values[half - 1] / half;
  r.average_full = reg.values[T - 1] / T;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = T - half;
  for (int t = half; t < T; ++t) {
    const double x = t + 1;
    sx += x;
    sy += reg.values[t];
    sxx += x * x;
    sxy += x * reg.values[t];
  }
  r.tail_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  // Linear growth gives equal averages; a relative margin keeps rounding from deciding.
  r.sublinear = r.average_full < r.average_half - 1e-9 * (1.0 + std::abs(r.average_half));
  if (reg.values.cwiseAbs().maxCoeff() == 0.0) {
    r.tail_slope = 0.0;
    r.sublinear = true;
  }
  return r;
}

BootstrapInterval bootstrap_mean_difference(const std::vector<double>& a, const std::vector<double>& b, int resamples,
                                            std::uint64_t seed, double level) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("bootstrap: samples must be paired and non-empty");
  if (resamples < 1 || !(level > 0 && level < 1)) throw std::invalid_argument("bootstrap: bad resamples or level");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  Rng rng = make_rng(seed, {0xb0075ULL});
  std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d[pick(rng)];
    m = s / static_cast<double>(d.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  BootstrapInterval out;
  out.mean = mean_of(d);
  out.lo = quantile((1.0 - level) / 2.0);
  out.hi = quantile(1.0 - (1.0 - level) / 2.0);
  out.resamples = resamples;
  return out;
}

// ---- artifacts ---------------------------------------------------------

Artifacts Artifacts::load(const fs::path& dir, const ExperimentConfig& cfg, unsigned need) {
  Artifacts a;
  auto require = [&](const char* name) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw std::runtime_error("missing artifact " + p.string() + " (run the training subcommands first)");
    a.hashes[name] = io::file_hash(p);
    return p;
  };
  const int actions = static_cast<int>((cfg.full_catalog ? full_action_catalog() : default_action_catalog()).size());
  const std::uint64_t chash = catalog_hash(cfg.full_catalog ? full_action_catalog() : default_action_catalog());
  if (need & kMeta) {
    io::PolicyFile pf = io::read_policy(require(artifact::kMetaPolicy));
    if (pf.catalog_hash != chash || pf.policy.action_count() != actions)
      throw std::runtime_error("meta policy was trained for a different action catalog");
    a.policy = pf.policy;
    a.meta_theta = pf.theta;
    a.bank = io::read_bank(require(artifact::kBank));
    if (a.bank.policy_hash != params_hash(a.meta_theta))
      throw std::runtime_error("trajectory bank was not generated by the stored meta policy");
    if (a.bank.horizon != cfg.schedule.horizon) throw std::runtime_error("trajectory bank horizon differs from config");
  }
  if (need & kClassifier) a.likelihood = io::read_likelihood(require(artifact::kClassifier));
  if (need & kBaselines) {
    io::PolicyFile pf = io::read_policy(require(artifact::kBasePolicy));
    if (pf.catalog_hash != chash) throw std::runtime_error("base policy was trained for a different action catalog");
    a.base_theta = pf.theta;
    a.q_tables = io::read_q_tables(require(artifact::kQTables));
  }
  return a;
}

std::string Artifacts::fingerprint() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, h] : hashes) {
    out << (first ? "" : ";") << name << ':' << hex64(h);
    first = false;
  }
  return first ? "none" : out.str();
}

std::string csv_preamble(const ExperimentConfig& cfg, const std::string& fingerprint) {
  return "# config_hash=" + hex64(cfg.hash()) + " artifacts=" + fingerprint + "\n";
}

MetaTrainReport stage_meta_train(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto probe = cfg.dynamic_env();
  const Policy policy = cfg.policy.make(probe->observation_dim(), probe->action_count());
  MetaTrainReport rep = meta_train(policy, cfg.fixed_factory(), fixed_modes(cfg.anchors.modes()), cfg.trainer,
                                   policy.initial_params(cfg.trainer.seed));
  io::write_policy(out_dir / artifact::kMetaPolicy, policy, rep.theta, catalog_hash(probe->config().catalog));
  io::write_bank(out_dir / artifact::kBank, rep.banks);
  std::ostringstream curve;
  curve << csv_preamble(cfg, "none") << "iteration,mean_reward\n";
  for (std::size_t i = 0; i < rep.iteration_rewards.size(); ++i)
    curve << i << ',' << io::fmt(rep.iteration_rewards[i]) << '\n';
  io::write_text(out_dir / artifact::kMetaCurve, curve.str());
  return rep;
}

std::vector<LabeledSample> collect_classifier_samples(const ExperimentConfig& cfg, const Policy& policy,
                                                      const PolicyParams& theta) {
  const auto anchors = cfg.anchors.modes();
  const int n = cfg.classifier.episodes;
  std::vector<std::vector<LabeledSample>> per(static_cast<std::size_t>(n));
  parallel_for(n, cfg.experiment.workers, [&](int e) {
    auto env = cfg.dynamic_env();
    Rng env_rng = make_rng(cfg.classifier.train.seed, {tag(Stream::kEnvironment), static_cast<std::uint64_t>(e)});
    Rng pol_rng = make_rng(cfg.classifier.train.seed, {tag(Stream::kPolicy), static_cast<std::uint64_t>(e)});
    Observation obs = env->reset(env_rng);
    auto& out = per[static_cast<std::size_t>(e)];
    while (!env->done()) {
      if (env->time() % cfg.classifier.stride == 0) out.push_back({obs, nearest_anchor(env->mode(), anchors)});
      obs = env->step(sample_action(policy, theta, obs, pol_rng), env_rng).obs;
    }
  });
  std::vector<LabeledSample> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  return all;
}

LikelihoodModel stage_train_classifier(const ExperimentConfig& cfg, const fs::path& out_dir) {
  Artifacts a = Artifacts::load(out_dir, cfg, Artifacts::kMeta);
  const auto samples = collect_classifier_samples(cfg, a.policy, a.meta_theta);
  io::write_samples(out_dir / artifact::kSamples, samples);
  LikelihoodModel model = train_likelihood(samples, cfg.classifier.train);
  io::write_likelihood(out_dir / artifact::kClassifier, model);
  return model;
}

BaselineArtifacts stage_train_baselines(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto probe = cfg.dynamic_env();
  const Policy policy = cfg.policy.make(probe->observation_dim(), probe->action_count());
  TrainerConfig tc = cfg.trainer;
  tc.episodes_per_mode = cfg.baselines.base_episodes_per_mode;
  EnvFactory dynamic = [&cfg](const Mode&) -> std::unique_ptr<Environment> { return cfg.dynamic_env(); };
  BaselineArtifacts out;
  out.base_theta = train_base_policy(policy, dynamic, tc, policy.initial_params(cfg.trainer.seed)).theta;
  io::write_policy(out_dir / artifact::kBasePolicy, policy, out.base_theta, catalog_hash(probe->config().catalog));

  const auto anchors = cfg.anchors.modes();
  out.q_tables.resize(anchors.size());
  parallel_for(static_cast<int>(anchors.size()), cfg.experiment.workers, [&](int j) {
    auto env = cfg.fixed_env(anchors[static_cast<std::size_t>(j)]);
    QLearningConfig q = cfg.baselines.q;
    q.seed = cfg.baselines.q.seed + static_cast<std::uint64_t>(j);
    out.q_tables[static_cast<std::size_t>(j)] = train_q_table(*env, Bucketizer::lane_world_default(), q);
  });
  io::write_q_tables(out_dir / artifact::kQTables, out.q_tables);
  return out;
}

// ---- comparison --------------------------------------------------------

const PolicySummary& ComparisonResult::of(const std::string& policy) const {
  for (const auto& s : summary)
    if (s.policy == policy) return s;
  throw std::out_of_range("no summary for policy " + policy);
}

std::vector<double> ComparisonResult::rewards(const std::string& policy) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.policy == policy) out.push_back(r.reward);
  return out;
}

ComparisonResult run_comparison(const ExperimentConfig& cfg, const Artifacts& art,
                                const std::vector<std::uint64_t>& seeds, int episodes, int workers) {
  const auto jobs = jobs_for(seeds, episodes);
  const auto& ids = policy_ids();
  const auto anchors = cfg.anchors.modes();
  const int H = cfg.schedule.horizon;
  const LogisticClassifier classifier(art.likelihood);
  const ColaConfig cc = cola_config(cfg);

  // results[job][policy]
  std::vector<std::vector<EpisodeResult>> results(jobs.size(), std::vector<EpisodeResult>(ids.size()));
  parallel_for(static_cast<int>(jobs.size()), workers, [&](int i) {
    const Job& j = jobs[static_cast<std::size_t>(i)];
    const auto ep = static_cast<std::uint64_t>(j.episode);
    auto& r = results[static_cast<std::size_t>(i)];
    {
      auto env = cfg.dynamic_env();
      r[0] = cola_episode(art.policy, art.meta_theta, classifier, art.bank, *env, cc, j.seed, ep);
    }
    {
      auto env = cfg.dynamic_env();
      r[1] = base_episode(art.policy, art.base_theta, *env, j.seed, ep);
    }
    {
      auto env = cfg.dynamic_env();
      r[2] = maml_episode(art.policy, art.meta_theta, *env, cfg.cola.lookahead.K, cfg.baselines.maml_alpha, j.seed, ep);
    }
    {
      auto env = cfg.dynamic_env();
      r[3] = qmix_episode(art.q_tables, classifier, anchors, *env, cc.likelihood_floor, j.seed, ep);
    }
    {
      auto env = cfg.dynamic_env();
      r[4] = oracle_episode(art.policy, art.meta_theta, *env, cfg.cola.lookahead, j.seed, ep);
    }
  });

  ComparisonResult out;
  out.horizon = H;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const Trajectory& tr = results[i][p].trajectory;
      out.rows.push_back({jobs[i].seed, jobs[i].episode, ids[p], tr.total_reward(), tr.size(), tr.mean_speed()});
    }

  std::vector<Vector> oracle_series;
  for (std::size_t i = 0; i < jobs.size(); ++i) oracle_series.push_back(results[i][4].trajectory.reward_series(H));
  const auto cola_rewards = out.rewards("cola");
  for (std::size_t p = 0; p < ids.size(); ++p) {
    PolicySummary s;
    s.policy = ids[p];
    const auto rw = out.rewards(ids[p]);
    s.mean = mean_of(rw);
    s.stddev = stddev_of(rw);
    s.cola_minus = bootstrap_mean_difference(cola_rewards, rw);
    std::vector<Vector> series;
    for (std::size_t i = 0; i < jobs.size(); ++i) series.push_back(results[i][p].trajectory.reward_series(H));
    s.regret = regret(oracle_series, series);
    s.regret.policy = ids[p];
    s.regret.seeds = seeds;
    if (H >= 20) s.shape = sublinearity_stat(s.regret);
    out.summary.push_back(std::move(s));
  }
  return out;
}

void write_comparison(const ComparisonResult& res, const ExperimentConfig& cfg, const Artifacts& art,
                      const fs::path& out_dir, bool plots) {
  const std::string pre = csv_preamble(cfg, art.fingerprint());
  {
    std::ostringstream out;
    out << pre << "seed,episode,policy,reward,length,mean_speed\n";
    for (const auto& r : res.rows)
      out << r.seed << ',' << r.episode << ',' << r.policy << ',' << io::fmt(r.reward) << ',' << r.length << ','
          << io::fmt(r.mean_speed) << '\n';
    io::write_text(out_dir / "compare_episodes.csv", out.str());
  }
  {
    std::ostringstream out;
    out << pre << "t";
    for (const auto& s : res.summary) out << ',' << s.policy;
    out << '\n';
    for (int t = 0; t < res.horizon; ++t) {
      out << t + 1;
      for (const auto& s : res.summary) out << ',' << io::fmt(s.regret.values[t]);
      out << '\n';
    }
    io::write_text(out_dir / "compare_regret.csv", out.str());
  }
  {
    std::ostringstream out;
    out << pre
        << "policy,mean_reward,std_reward,cola_minus_mean,cola_minus_lo95,cola_minus_hi95,regret_T,"
           "avg_regret_half,avg_regret_full,tail_slope,sublinear\n";
    for (const auto& s : res.summary)
      out << s.policy << ',' << io::fmt(s.mean) << ',' << io::fmt(s.stddev) << ',' << io::fmt(s.cola_minus.mean) << ','
          << io::fmt(s.cola_minus.lo) << ',' << io::fmt(s.cola_minus.hi) << ','
          << io::fmt(s.regret.values[s.regret.T() - 1]) << ',' << io::fmt(s.shape.average_half) << ','
          << io::fmt(s.shape.average_full) << ',' << io::fmt(s.shape.tail_slope) << ','
          << (s.shape.sublinear ? 1 : 0) << '\n';
    io::write_text(out_dir / "compare_summary.csv", out.str());
  }
  if (plots) {
    std::vector<std::pair<std::string, Vector>> series;
    for (const auto& s : res.summary)
      if (s.policy != "oracle") series.emplace_back(s.policy, s.regret.values);
    io::write_text(out_dir / "compare_regret.svg", svg_line_chart("Cumulative regret vs oracle", series, "t", "Reg(t)"));
  }
}

// ---- filter ablation ---------------------------------------------------

double AblationResult::transient_win_fraction(int t_min) const {
  int total = 0;
  int wins = 0;
  for (const auto& s : steps) {
    if (s.t < t_min || s.alive == 0) continue;
    ++total;
    wins += s.filter_accuracy >= s.vanilla_accuracy ? 1 : 0;
  }
  return total > 0 ? static_cast<double>(wins) / total : 0.0;
}

AblationResult ablate_filter(const ExperimentConfig& cfg, const Artifacts& art, const ModeClassifier& classifier,
                             const std::vector<std::uint64_t>& seeds, int episodes, int workers) {
  const auto jobs = jobs_for(seeds, episodes);
  const auto anchors = cfg.anchors.modes();
  const bool fixed = cfg.experiment.ablation_condition == "fixed";
  ColaConfig with = cola_config(cfg);
  with.use_filter = true;
  ColaConfig without = with;
  without.use_filter = false;

  std::vector<EpisodeResult> filt(jobs.size());
  std::vector<EpisodeResult> van(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), workers, [&](int i) {
    const Job& j = jobs[static_cast<std::size_t>(i)];
    auto make = [&]() -> std::unique_ptr<LaneWorld> {
      return fixed ? cfg.fixed_env(anchors[static_cast<std::size_t>(j.episode) % anchors.size()]) : cfg.dynamic_env();
    };
    auto e1 = make();
    filt[static_cast<std::size_t>(i)] = cola_episode(art.policy, art.meta_theta, classifier, art.bank, *e1, with, j.seed,
                                                     static_cast<std::uint64_t>(j.episode));
    auto e2 = make();
    van[static_cast<std::size_t>(i)] = cola_episode(art.policy, art.meta_theta, classifier, art.bank, *e2, without,
                                                    j.seed, static_cast<std::uint64_t>(j.episode));
  });

  std::vector<AccuracyRecord> fr;
  std::vector<AccuracyRecord> vr;
  std::vector<double> frw;
  std::vector<double> vrw;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    fr.push_back(filt[i].accuracy);
    vr.push_back(van[i].accuracy);
    frw.push_back(filt[i].trajectory.total_reward());
    vrw.push_back(van[i].trajectory.total_reward());
  }
  AblationResult out;
  out.episodes = static_cast<int>(jobs.size());
  out.filter_episodic = episodic_accuracy(fr);
  out.vanilla_episodic = episodic_accuracy(vr);
  out.filter_reward = mean_of(frw);
  out.vanilla_reward = mean_of(vrw);
  for (int t = 0; t < cfg.schedule.horizon; ++t) {
    AblationStep s;
    s.t = t;
    // Count only episodes alive in both runs so the two accuracies share a denominator.
    std::vector<AccuracyRecord> f_alive;
    std::vector<AccuracyRecord> v_alive;
    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (t < fr[i].size() && t < vr[i].size()) {
        f_alive.push_back(fr[i]);
        v_alive.push_back(vr[i]);
      }
    s.alive = static_cast<int>(f_alive.size());
    if (s.alive > 0) {
      s.filter_accuracy = transient_accuracy(f_alive, t);
      s.vanilla_accuracy = transient_accuracy(v_alive, t);
    }
    out.steps.push_back(s);
  }
  return out;
}

void write_ablation(const AblationResult& res, const ExperimentConfig& cfg, const std::string& fingerprint,
                    const fs::path& out_dir, bool plots) {
  std::ostringstream out;
  out << csv_preamble(cfg, fingerprint) << "t,transient_acc_filter,transient_acc_vanilla,episodes_alive\n";
  for (const auto& s : res.steps)
    out << s.t << ',' << io::fmt(s.filter_accuracy) << ',' << io::fmt(s.vanilla_accuracy) << ',' << s.alive << '\n';
  // Summary row: episodic accuracies in the accuracy columns, episode count in the last.
  out << "summary," << io::fmt(res.filter_episodic) << ',' << io::fmt(res.vanilla_episodic) << ',' << res.episodes
      << '\n';
  io::write_text(out_dir / "ablate_filter.csv", out.str());
  std::ostringstream sum;
  sum << csv_preamble(cfg, fingerprint) << "key,value\n"
      << "episodes," << res.episodes << '\n'
      << "episodic_acc_filter," << io::fmt(res.filter_episodic) << '\n'
      << "episodic_acc_vanilla," << io::fmt(res.vanilla_episodic) << '\n'
      << "mean_reward_filter," << io::fmt(res.filter_reward) << '\n'
      << "mean_reward_vanilla," << io::fmt(res.vanilla_reward) << '\n'
      << "transient_win_fraction_t5," << io::fmt(res.transient_win_fraction(5)) << '\n';
  io::write_text(out_dir / "ablate_filter_summary.csv", sum.str());
  if (plots) {
    Vector f(static_cast<Eigen::Index>(res.steps.size()));
    Vector v(static_cast<Eigen::Index>(res.steps.size()));
    for (std::size_t i = 0; i < res.steps.size(); ++i) {
      f[static_cast<Eigen::Index>(i)] = res.steps[i].filter_accuracy;
      v[static_cast<Eigen::Index>(i)] = res.steps[i].vanilla_accuracy;
    }
    io::write_text(out_dir / "ablate_filter.svg",
                   svg_line_chart("Transient accuracy", {{"filter", f}, {"vanilla", v}}, "t", "accuracy"));
  }
}

// ---- lookahead sweep ---------------------------------------------------

std::vector<SweepRow> sweep_lookahead(const ExperimentConfig& cfg, const Artifacts& art, const std::vector<int>& Ks,
                                      const std::vector<std::uint64_t>& seeds, int episodes, int workers) {
  if (Ks.empty()) throw std::invalid_argument("sweep_lookahead: no K values");
  for (int K : Ks)
    if (K < 1 || K > cfg.schedule.horizon) throw std::invalid_argument("sweep_lookahead: K outside [1, horizon]");
  const auto jobs = jobs_for(seeds, episodes);
  const auto anchors = cfg.anchors.modes();
  const LogisticClassifier classifier(art.likelihood);
  const std::vector<std::string> conditions{"cloudy", "rainy", "dynamic"};

  const std::size_t per = jobs.size();
  const std::size_t total = Ks.size() * conditions.size() * per;
  std::vector<double> rewards(total);
  parallel_for(static_cast<int>(total), workers, [&](int flat) {
    const auto f = static_cast<std::size_t>(flat);
    const std::size_t k = f / (conditions.size() * per);
    const std::size_t c = (f / per) % conditions.size();
    const Job& j = jobs[f % per];
    ColaConfig cc = cola_config(cfg);
    cc.lookahead.K = Ks[k];
    auto env = c < 2 ? cfg.fixed_env(anchors[c]) : cfg.dynamic_env();
    rewards[f] = cola_episode(art.policy, art.meta_theta, classifier, art.bank, *env, cc, j.seed,
                              static_cast<std::uint64_t>(j.episode))
                     .trajectory.total_reward();
  });

  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < Ks.size(); ++k)
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      const auto first = rewards.begin() + static_cast<std::ptrdiff_t>((k * conditions.size() + c) * per);
      std::vector<double> r(first, first + static_cast<std::ptrdiff_t>(per));
      rows.push_back({Ks[k], conditions[c], mean_of(r), stddev_of(r), static_cast<int>(per)});
    }
  return rows;
}

void write_sweep(const std::vector<SweepRow>& rows, const ExperimentConfig& cfg, const std::string& fingerprint,
                 const fs::path& out_dir) {
  std::ostringstream out;
  out << csv_preamble(cfg, fingerprint) << "K,condition,mean_reward,std_reward,episodes\n";
  for (const auto& r : rows)
    out << r.K << ',' << r.condition << ',' << io::fmt(r.mean) << ',' << io::fmt(r.stddev) << ',' << r.episodes << '\n';
  io::write_text(out_dir / "sweep_k.csv", out.str());
}

// ---- knowledge transfer ------------------------------------------------

std::vector<TransferRow> knowledge_transfer(const ExperimentConfig& cfg, const Artifacts& art, std::uint64_t seed,
                                            int episodes, int workers) {
  if (episodes < 1) throw std::invalid_argument("knowledge_transfer: episode count must be positive");
  const auto anchors = cfg.anchors.modes();
  const SyntheticClassifier perfect(static_cast<int>(anchors.size()), 1.0);
  const std::size_t cells = anchors.size() * anchors.size();
  std::vector<std::vector<EpisodeResult>> res(cells, std::vector<EpisodeResult>(static_cast<std::size_t>(episodes)));
  parallel_for(static_cast<int>(cells) * episodes, workers, [&](int flat) {
    const auto cell = static_cast<std::size_t>(flat / episodes);
    const int e = flat % episodes;
    const std::size_t truth = cell / anchors.size();
    const std::size_t grad = cell % anchors.size();
    ColaConfig cc = cola_config(cfg);
    cc.lookahead.trust_region.delta = cfg.experiment.transfer_delta;
    Belief onehot = Belief::Zero(static_cast<Eigen::Index>(anchors.size()));
    onehot[static_cast<Eigen::Index>(grad)] = 1.0;
    cc.gradient_belief = onehot;
    auto env = cfg.fixed_env(anchors[truth]);
    res[cell][static_cast<std::size_t>(e)] =
        cola_episode(art.policy, art.meta_theta, perfect, art.bank, *env, cc, seed, static_cast<std::uint64_t>(e));
  });
  std::vector<TransferRow> rows;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    TransferRow r;
    r.true_mode = modes_label(static_cast<int>(cell / anchors.size()));
    r.gradient = modes_label(static_cast<int>(cell % anchors.size()));
    std::vector<double> v;
    std::vector<double> w;
    for (const auto& e : res[cell]) {
      v.push_back(e.trajectory.mean_speed());
      w.push_back(e.trajectory.total_reward());
    }
    r.mean_speed = mean_of(v);
    r.mean_reward = mean_of(w);
    r.episodes = episodes;
    rows.push_back(r);
  }
  return rows;
}

void write_transfer(const std::vector<TransferRow>& rows, const ExperimentConfig& cfg, const std::string& fingerprint,
                    const fs::path& out_dir) {
  std::ostringstream out;
  out << csv_preamble(cfg, fingerprint) << "true_mode,gradient,mean_speed,mean_reward,episodes\n";
  for (const auto& r : rows)
    out << r.true_mode << ',' << r.gradient << ',' << io::fmt(r.mean_speed) << ',' << io::fmt(r.mean_reward) << ','
        << r.episodes << '\n';
  io::write_text(out_dir / "transfer.csv", out.str());
}

// ---- plotting ----------------------------------------------------------

std::string svg_line_chart(const std::string& title, const std::vector<std::pair<std::string, Vector>>& series,
                           const std::string& x_label, const std::string& y_label) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double W = 640, Hh = 400, L = 70, R = 130, T = 40, B = 50;
  double lo = 0.0, hi = 0.0;
  Eigen::Index n = 1;
  bool first = true;
  for (const auto& [name, v] : series) {
    if (v.size() == 0) continue;
    n = std::max(n, v.size());
    lo = first ? v.minCoeff() : std::min(lo, v.minCoeff());
    hi = first ? v.maxCoeff() : std::max(hi, v.maxCoeff());
    first = false;
  }
  if (!(hi > lo)) hi = lo + 1.0;
  auto px = [&](double i) { return L + (W - L - R) * (n > 1 ? i / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double y) { return Hh - B - (Hh - T - B) * (y - lo) / (hi - lo); };
  char buf[128];
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << Hh - B << "\" x2=\"" << W - R << "\" y2=\"" << Hh - B << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << Hh - B << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n"
    << "<text x=\"16\" y=\"" << (T + Hh - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + Hh - B) / 2
    << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = lo + (hi - lo) * k / 4.0;
    std::snprintf(buf, sizeof buf, "%.4g", y);
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  std::snprintf(buf, sizeof buf, "%ld", static_cast<long>(n));
  s << "<text x=\"" << W - R << "\" y=\"" << Hh - B + 16 << "\" text-anchor=\"middle\">" << buf << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& [name, v] = series[i];
    const char* c = colors[i % 6];
    s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (Eigen::Index t = 0; t < v.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(static_cast<double>(t)), py(v[t]));
      s << buf;
    }
    s << "\"/>\n";
    const double ly = T + 18.0 * static_cast<double>(i);
    s << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace cola
