#include "cola/config.hpp"
#include "cola/io.hpp"

#include <doctest.h>

#include <filesystem>

using namespace cola;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cola_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TrajectoryBank tiny_bank() {
  LaneWorldConfig lw;
  ScheduleConfig sc;
  sc.horizon = 20;
  const Policy pol = Policy::linear(kObservationDim, 9);
  const PolicyParams theta = PolicyParams::Constant(pol.parameter_count(), 0.05);
  EnvFactory fac = [&](const Mode& m) {
    ScheduleConfig s = sc;
    s.fixed_mode = m;
    return std::make_unique<LaneWorld>(lw, s);
  };
  return collect_bank(pol, fac, {mode_params(-20, -10), mode_params(60, -10)}, theta, 3, 7, 1);
}

}  // namespace

TEST_CASE("policy files round-trip bit-exactly") {
  TempDir dir("policy");
  const Policy pol = Policy::mlp(4, 3, 5);
  const PolicyParams theta = pol.initial_params(3) * (1.0 / 3.0);
  io::write_policy(dir.path / "p.txt", pol, theta, 0xdeadbeefULL);
  const io::PolicyFile f = io::read_policy(dir.path / "p.txt");
  CHECK(f.policy.family() == PolicyFamily::kMlp);
  CHECK(f.policy.parameter_count() == pol.parameter_count());
  CHECK(f.theta == theta);
  CHECK(f.catalog_hash == 0xdeadbeefULL);

  io::write_text(dir.path / "bad.txt", "not-a-policy\n");
  CHECK_THROWS_AS(io::read_policy(dir.path / "bad.txt"), std::runtime_error);
  CHECK_THROWS_AS(io::read_policy(dir.path / "missing.txt"), std::runtime_error);
}

TEST_CASE("trajectory banks round-trip") {
  TempDir dir("bank");
  const TrajectoryBank bank = tiny_bank();
  io::write_bank(dir.path / "b.csv", bank);
  const TrajectoryBank back = io::read_bank(dir.path / "b.csv");
  CHECK(back.policy_hash == bank.policy_hash);
  CHECK(back.horizon == bank.horizon);
  REQUIRE(back.mode_count() == 2);
  CHECK(back.anchors == bank.anchors);
  for (int j = 0; j < 2; ++j) {
    REQUIRE(back.trajectories[j].size() == bank.trajectories[j].size());
    for (std::size_t i = 0; i < bank.trajectories[j].size(); ++i) {
      const Trajectory& a = bank.trajectories[j][i];
      const Trajectory& b = back.trajectories[j][i];
      CHECK(a.terminal_time == b.terminal_time);
      CHECK(a.out_of_lane_count == b.out_of_lane_count);
      CHECK(a.terminal_reward == b.terminal_reward);
      REQUIRE(a.size() == b.size());
      for (int h = 0; h < a.size(); ++h) {
        CHECK(a.steps[h].obs == b.steps[h].obs);
        CHECK(a.steps[h].action == b.steps[h].action);
        CHECK(a.steps[h].reward == b.steps[h].reward);
        CHECK(a.steps[h].mode == b.steps[h].mode);
      }
    }
  }
  io::write_text(dir.path / "bad.csv", "# something else\n");
  CHECK_THROWS_AS(io::read_bank(dir.path / "bad.csv"), std::runtime_error);
}

TEST_CASE("likelihood models, samples and Q-tables round-trip") {
  TempDir dir("models");
  std::vector<LabeledSample> samples;
  Rng rng = make_rng(31);
  std::normal_distribution<double> g(0.0, 0.5);
  for (int i = 0; i < 200; ++i) {
    Observation o(3);
    o << (i % 2) + g(rng), g(rng), 1.0 / 3.0;
    samples.push_back({o, i % 2});
  }
  io::write_samples(dir.path / "s.csv", samples);
  const auto s2 = io::read_samples(dir.path / "s.csv");
  REQUIRE(s2.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(s2[i].obs == samples[i].obs);
    CHECK(s2[i].label == samples[i].label);
  }

  const LikelihoodModel m = train_likelihood(samples);
  io::write_likelihood(dir.path / "m.txt", m);
  const LikelihoodModel m2 = io::read_likelihood(dir.path / "m.txt");
  CHECK(m2.weights() == m.weights());
  CHECK(m2.feature_mean() == m.feature_mean());
  CHECK(m2.feature_scale() == m.feature_scale());
  CHECK(m2(samples[5].obs) == m(samples[5].obs));

  QTable q;
  q.bucketizer = Bucketizer({{0.0, 1.0, 3}, {-2.0, 2.0, 2}});
  q.values = Matrix::Random(6, 4);
  q.visits = {1, 0, 5, 7, 9, 2};
  q.mode = Mode{90, 60, 50};
  q.episodes = 77;
  q.converged = true;
  QTable r = q;
  r.mode = Mode{20, 0, 0};
  r.converged = false;
  io::write_q_tables(dir.path / "q.txt", {q, r});
  const auto qs = io::read_q_tables(dir.path / "q.txt");
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].values == q.values);
  CHECK(qs[0].visits == q.visits);
  CHECK(qs[0].mode == q.mode);
  CHECK(qs[0].episodes == 77);
  CHECK(qs[0].converged);
  CHECK_FALSE(qs[1].converged);
  CHECK(qs[1].bucketizer.bucket_count() == 6);

  io::write_text(dir.path / "bad.txt", "cola-qtables 9\n");
  CHECK_THROWS_AS(io::read_q_tables(dir.path / "bad.txt"), std::runtime_error);
  CHECK_THROWS_AS(io::read_likelihood(dir.path / "bad.txt"), std::runtime_error);
}

TEST_CASE("file hashes and number formatting") {
  TempDir dir("hash");
  io::write_text(dir.path / "a/b.txt", "abc");
  io::write_text(dir.path / "c.txt", "abd");
  CHECK(io::file_hash(dir.path / "a/b.txt") != io::file_hash(dir.path / "c.txt"));
  CHECK(io::file_hash(dir.path / "a/b.txt") == io::file_hash(dir.path / "a/b.txt"));
  CHECK(io::read_text(dir.path / "a/b.txt") == "abc");
  CHECK(std::stod(io::fmt(0.1)) == 0.1);
  CHECK_THROWS_AS(io::file_hash(dir.path / "nope"), std::runtime_error);
}

TEST_CASE("configuration JSON round-trips and rejects bad input") {
  const ExperimentConfig def;
  CHECK_NOTHROW(def.validate());
  const ExperimentConfig back = config_from_json(def.to_json());
  CHECK(back.to_json() == def.to_json());
  CHECK(back.hash() == def.hash());

  const ExperimentConfig partial = config_from_json(R"({"cola": {"lookahead": {"K": 7}}, "experiment": {"seeds": [3]}})");
  CHECK(partial.cola.lookahead.K == 7);
  CHECK(partial.experiment.seeds == std::vector<std::uint64_t>{3});
  CHECK(partial.cola.lookahead.M == def.cola.lookahead.M);
  CHECK(partial.hash() != def.hash());

  CHECK(config_from_json("{}").to_json() == def.to_json());
  CHECK_THROWS_AS(config_from_json(R"({"colaa": {}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"cola": {"lookahead": {"KK": 3}}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"cola": {"lookahead": {"K": "ten"}}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"cola": {"lookahead": {"K": 500}}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"cola": {"lookahead": {"M": 100}}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"experiment": {"seeds": []}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"policy": {"family": "rnn"}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("[1, 2"), std::invalid_argument);

  try {
    config_from_json(R"({"cola": {"lookahead": {"KK": 3}}})");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("cola.lookahead") != std::string::npos);
  }
}

TEST_CASE("config files load from disk") {
  TempDir dir("config");
  io::write_text(dir.path / "c.json", R"({"schedule": {"horizon": 50}, "cola": {"lookahead": {"K": 5}}})");
  const ExperimentConfig c = load_config(dir.path / "c.json");
  CHECK(c.schedule.horizon == 50);
  CHECK(c.dynamic_env()->horizon() == 50);
  CHECK_THROWS(load_config(dir.path / "absent.json"));
}
