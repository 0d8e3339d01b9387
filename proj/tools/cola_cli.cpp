// Command-line front end for training, adaptation runs and experiments.

#include "cola/harness.hpp"
#include "cola/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace cola;

struct Common {
  std::string config;
  std::string seed_list;
  std::string out_dir = "out";
  int episodes = 0;
  int workers = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON experiment config (defaults apply to missing keys)");
  sub->add_option("--seed-list", c.seed_list, "comma-separated seeds, overrides experiment.seeds");
  sub->add_option("--out-dir", c.out_dir, "artifact and result directory")->capture_default_str();
  sub->add_option("--episodes", c.episodes, "episodes per seed, overrides the config")->check(CLI::PositiveNumber);
  sub->add_option("--workers", c.workers, "worker threads, overrides experiment.workers")->check(CLI::PositiveNumber);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (item.front() == '-') throw std::invalid_argument("negative");
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("--seed-list: bad seed '" + item + "'");
    }
    if (used != item.size()) throw std::invalid_argument("--seed-list: bad seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--seed-list is empty");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(flag) + ": bad value '" + item + "'");
    }
  }
  return out;
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (!c.seed_list.empty()) cfg.experiment.seeds = parse_seeds(c.seed_list);
  if (c.episodes > 0) cfg.experiment.episodes = c.episodes;
  if (c.workers > 0) cfg.experiment.workers = c.workers;
  cfg.validate();
  return cfg;
}

void note(const std::string& msg) { std::cerr << msg << '\n'; }

int cmd_meta_train(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const MetaTrainReport rep = stage_meta_train(cfg, c.out_dir);
  std::printf("meta-train: %d iterations (%s), final mean reward %.3f, bank %d x %d\n", rep.iterations,
              rep.converged ? "plateau" : "iteration cap",
              rep.iteration_rewards.empty() ? 0.0 : rep.iteration_rewards.back(), rep.banks.mode_count(),
              rep.banks.depth());
  return 0;
}

int cmd_train_classifier(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const LikelihoodModel m = stage_train_classifier(cfg, c.out_dir);
  std::printf("train-classifier: train accuracy %.4f, held-out accuracy %.4f\n", m.train_accuracy, m.holdout_accuracy);
  return 0;
}

int cmd_train_baselines(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const BaselineArtifacts b = stage_train_baselines(cfg, c.out_dir);
  std::printf("train-baselines: base policy written; Q-tables:");
  for (const auto& q : b.q_tables)
    std::printf(" [%d episodes, %s, %d unvisited buckets]", q.episodes, q.converged ? "plateau" : "cap", q.unvisited());
  std::printf("\n");
  return 0;
}

int cmd_run_cola(const Common& c, const std::string& condition, bool transfer) {
  const ExperimentConfig cfg = resolve(c);
  const Artifacts art = Artifacts::load(c.out_dir, cfg, Artifacts::kMeta | Artifacts::kClassifier);
  const LogisticClassifier classifier(art.likelihood);
  const auto anchors = cfg.anchors.modes();
  if (condition != "dynamic" && condition != "cloudy" && condition != "rainy")
    throw std::invalid_argument("--condition must be dynamic, cloudy or rainy");

  std::vector<std::pair<std::uint64_t, int>> jobs;
  auto seeds = cfg.experiment.seeds;
  std::sort(seeds.begin(), seeds.end());
  for (auto s : seeds)
    for (int e = 0; e < cfg.experiment.episodes; ++e) jobs.emplace_back(s, e);
  std::vector<EpisodeResult> res(jobs.size());
  ColaConfig cc = cfg.cola;
  cc.likelihood_floor = cfg.classifier.likelihood_floor;
  parallel_for(static_cast<int>(jobs.size()), cfg.experiment.workers, [&](int i) {
    auto env = condition == "dynamic" ? cfg.dynamic_env() : cfg.fixed_env(anchors[condition == "cloudy" ? 0 : 1]);
    res[static_cast<std::size_t>(i)] = cola_episode(art.policy, art.meta_theta, classifier, art.bank, *env, cc,
                                                    jobs[static_cast<std::size_t>(i)].first,
                                                    static_cast<std::uint64_t>(jobs[static_cast<std::size_t>(i)].second));
  });

  const std::string pre = csv_preamble(cfg, art.fingerprint());
  std::ostringstream ep;
  std::ostringstream st;
  ep << pre << "seed,episode,reward,length,mean_speed,episodic_accuracy,adapted_steps,max_sampled_kl\n";
  st << pre << "seed,episode,t,belief_rainy,predicted,truth,adapted,beta,sampled_kl,grad_norm,cg_residual,reward,speed\n";
  double total = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& r = res[i];
    int adapted = 0;
    double max_kl = 0.0;
    for (const auto& l : r.logs) {
      adapted += l.adapted ? 1 : 0;
      max_kl = std::max(max_kl, l.sampled_kl);
      st << jobs[i].first << ',' << jobs[i].second << ',' << l.t << ','
         << io::fmt(l.belief.size() > 1 ? l.belief[1] : 0.0) << ',' << l.predicted_label << ',' << l.true_label << ','
         << (l.adapted ? 1 : 0) << ',' << io::fmt(l.beta) << ',' << io::fmt(l.sampled_kl) << ','
         << io::fmt(l.grad_norm) << ',' << io::fmt(l.cg_residual) << ',' << io::fmt(l.reward) << ','
         << io::fmt(l.speed) << '\n';
    }
    ep << jobs[i].first << ',' << jobs[i].second << ',' << io::fmt(r.trajectory.total_reward()) << ','
       << r.trajectory.size() << ',' << io::fmt(r.trajectory.mean_speed()) << ','
       << io::fmt(episodic_accuracy({r.accuracy})) << ',' << adapted << ',' << io::fmt(max_kl) << '\n';
    total += r.trajectory.total_reward();
  }
  io::write_text(fs::path(c.out_dir) / "run_cola_episodes.csv", ep.str());
  io::write_text(fs::path(c.out_dir) / "run_cola_steps.csv", st.str());
  std::printf("run-cola: %zu episodes on %s, mean reward %.3f\n", jobs.size(), condition.c_str(),
              total / static_cast<double>(jobs.size()));

  if (transfer) {
    const auto rows = knowledge_transfer(cfg, art, seeds.front(), cfg.experiment.transfer_episodes, cfg.experiment.workers);
    write_transfer(rows, cfg, art.fingerprint(), c.out_dir);
    for (const auto& r : rows)
      std::printf("  transfer: true %-6s gradient %-6s mean speed %.4f\n", r.true_mode.c_str(), r.gradient.c_str(),
                  r.mean_speed);
  }
  return 0;
}

int cmd_compare(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Artifacts art = Artifacts::load(c.out_dir, cfg, Artifacts::kAll);
  const ComparisonResult res =
      run_comparison(cfg, art, cfg.experiment.seeds, cfg.experiment.episodes, cfg.experiment.workers);
  write_comparison(res, cfg, art, c.out_dir, cfg.experiment.plots);
  for (const auto& s : res.summary)
    std::printf("%-7s mean %12.3f  std %10.3f  cola-minus 95%% [%.3f, %.3f]  Reg(T) %.3f  %s\n", s.policy.c_str(), s.mean,
                s.stddev, s.cola_minus.lo, s.cola_minus.hi, s.regret.values[s.regret.T() - 1],
                s.shape.sublinear ? "sublinear" : "not-sublinear");
  return 0;
}

int cmd_ablate(const Common& c, double accuracy, bool trained, const std::string& condition) {
  ExperimentConfig cfg = resolve(c);
  if (!condition.empty()) cfg.experiment.ablation_condition = condition;
  if (accuracy > 0) cfg.experiment.ablation_accuracy = accuracy;
  cfg.validate();
  const unsigned need = Artifacts::kMeta | (trained ? Artifacts::kClassifier : 0u);
  const Artifacts art = Artifacts::load(c.out_dir, cfg, need);
  const int episodes = c.episodes > 0 ? c.episodes : cfg.experiment.ablation_episodes;
  std::unique_ptr<ModeClassifier> clf;
  if (trained)
    clf = std::make_unique<LogisticClassifier>(art.likelihood);
  else
    clf = std::make_unique<SyntheticClassifier>(static_cast<int>(cfg.anchors.modes().size()),
                                                cfg.experiment.ablation_accuracy);
  // One seed stream with all episodes unless a seed list is given.
  const std::vector<std::uint64_t> seeds =
      c.seed_list.empty() ? std::vector<std::uint64_t>{cfg.experiment.seeds.front()} : cfg.experiment.seeds;
  const AblationResult res = ablate_filter(cfg, art, *clf, seeds, episodes, cfg.experiment.workers);
  write_ablation(res, cfg, art.fingerprint(), c.out_dir, cfg.experiment.plots);
  std::printf("ablate-filter: episodic accuracy filter %.4f vanilla %.4f; transient wins (t>=5) %.3f; "
              "mean reward filter %.3f vanilla %.3f\n",
              res.filter_episodic, res.vanilla_episodic, res.transient_win_fraction(5), res.filter_reward,
              res.vanilla_reward);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& ks) {
  ExperimentConfig cfg = resolve(c);
  if (!ks.empty()) cfg.experiment.sweep_ks = parse_ints(ks, "--ks");
  cfg.validate();
  const Artifacts art = Artifacts::load(c.out_dir, cfg, Artifacts::kMeta | Artifacts::kClassifier);
  const int episodes = c.episodes > 0 ? c.episodes : cfg.experiment.sweep_episodes;
  const auto rows = sweep_lookahead(cfg, art, cfg.experiment.sweep_ks, cfg.experiment.seeds, episodes,
                                    cfg.experiment.workers);
  write_sweep(rows, cfg, art.fingerprint(), c.out_dir);
  for (const auto& r : rows)
    std::printf("K=%-3d %-8s mean %12.3f  std %10.3f  (n=%d)\n", r.K, r.condition.c_str(), r.mean, r.stddev, r.episodes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conjectural online lookahead adaptation on hidden-mode LaneWorld"};
  app.require_subcommand(1);
  Common common;

  auto* meta = app.add_subcommand("meta-train", "train the meta policy and its trajectory bank");
  add_common(meta, common);
  auto* clf = app.add_subcommand("train-classifier", "fit the mode likelihood model on meta-policy frames");
  add_common(clf, common);
  auto* base = app.add_subcommand("train-baselines", "train the single-environment policy and per-mode Q-tables");
  add_common(base, common);

  auto* run = app.add_subcommand("run-cola", "run COLA episodes and log every adaptation step");
  add_common(run, common);
  std::string condition = "dynamic";
  bool transfer = false;
  run->add_option("--condition", condition, "dynamic, cloudy or rainy")->capture_default_str();
  run->add_flag("--transfer", transfer, "also adapt with one-hot gradient beliefs on both fixed modes");

  auto* cmp = app.add_subcommand("compare", "COLA against base, MAML, Q-mix and the oracle");
  add_common(cmp, common);

  auto* abl = app.add_subcommand("ablate-filter", "Bayes filter versus raw classifier beliefs");
  add_common(abl, common);
  double accuracy = 0.0;
  bool trained = false;
  std::string abl_condition;
  abl->add_option("--accuracy", accuracy, "synthetic classifier accuracy (default from config)");
  abl->add_flag("--trained", trained, "use the trained classifier instead of the synthetic one");
  abl->add_option("--condition", abl_condition, "fixed or dynamic (default from config)");

  auto* sweep = app.add_subcommand("sweep-k", "COLA reward spread per lookahead horizon");
  add_common(sweep, common);
  std::string ks;
  sweep->add_option("--ks", ks, "comma-separated K values (default from config)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (meta->parsed()) return cmd_meta_train(common);
    if (clf->parsed()) return cmd_train_classifier(common);
    if (base->parsed()) return cmd_train_baselines(common);
    if (run->parsed()) return cmd_run_cola(common, condition, transfer);
    if (cmp->parsed()) return cmd_compare(common);
    if (abl->parsed()) return cmd_ablate(common, accuracy, trained, abl_condition);
    if (sweep->parsed()) return cmd_sweep(common, ks);
  } catch (const std::exception& e) {
    note(std::string("error: ") + e.what());
    return 1;
  }
  return 2;
}
