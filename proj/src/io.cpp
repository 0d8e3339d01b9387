#include "cola/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cola::io {

namespace {

constexpr const char* kPolicyMagic = "cola-policy 1";
constexpr const char* kBankMagic = "# cola-bank 1";
constexpr const char* kLikelihoodMagic = "cola-likelihood 1";
constexpr const char* kQMagic = "cola-qtables 1";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed number: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error("malformed number: '" + s + "'");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("malformed integer: '" + s + "'");
  return v;
}

std::uint64_t from_hex(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("malformed hash: '" + s + "'");
  return v;
}

/// Reads "key value" from the next line.
std::string expect_key(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("unexpected end of file, wanted '" + key + "'");
  const auto sp = line.find(' ');
  if (sp == std::string::npos || line.substr(0, sp) != key)
    throw std::runtime_error("expected '" + key + "', found '" + line + "'");
  return line.substr(sp + 1);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

void expect_magic(std::istream& in, const char* magic, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line) || line != magic)
    throw std::runtime_error(path.string() + ": not a '" + std::string(magic) + "' file");
}

}  // namespace

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t file_hash(const fs::path& path) { return Fnv1a().add(read_text(path)).value(); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_policy(const fs::path& path, const Policy& policy, const PolicyParams& theta, std::uint64_t catalog_hash) {
  if (theta.size() != policy.parameter_count()) throw std::invalid_argument("write_policy: parameter count mismatch");
  std::ostringstream out;
  out << kPolicyMagic << '\n'
      << "family " << to_string(policy.family()) << '\n'
      << "obs_dim " << policy.observation_dim() << '\n'
      << "actions " << policy.action_count() << '\n'
      << "hidden " << policy.hidden() << '\n'
      << "catalog " << hex64(catalog_hash) << '\n'
      << "params " << theta.size() << '\n';
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << fmt(theta[i]) << '\n';
  write_text(path, out.str());
}

PolicyFile read_policy(const fs::path& path) {
  auto in = open_in(path);
  expect_magic(in, kPolicyMagic, path);
  const PolicyFamily family = policy_family_from_string(expect_key(in, "family"));
  const int obs_dim = static_cast<int>(to_int(expect_key(in, "obs_dim")));
  const int actions = static_cast<int>(to_int(expect_key(in, "actions")));
  const int hidden = static_cast<int>(to_int(expect_key(in, "hidden")));
  PolicyFile f;
  f.catalog_hash = from_hex(expect_key(in, "catalog"));
  f.policy = family == PolicyFamily::kLinear ? Policy::linear(obs_dim, actions) : Policy::mlp(obs_dim, actions, hidden);
  const auto n = to_int(expect_key(in, "params"));
  if (n != f.policy.parameter_count()) throw std::runtime_error(path.string() + ": parameter count mismatch");
  f.theta.resize(n);
  std::string line;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated parameter list");
    f.theta[i] = to_double(line);
  }
  return f;
}

void write_bank(const fs::path& path, const TrajectoryBank& bank) {
  bank.validate();
  std::ostringstream out;
  out << kBankMagic << '\n'
      << "# policy_hash=" << hex64(bank.policy_hash) << " horizon=" << bank.horizon << " modes=" << bank.mode_count()
      << '\n';
  out << "# anchor,mode,cloudiness,rain,puddles\n"
      << "# episode,mode,index,t_term,n_out,n_slow,terminal_reward\n"
      << "# step,mode,index,t,action,reward,offset,heading,speed,curvature,cloudiness,rain,puddles,obs...\n";
  for (int j = 0; j < bank.mode_count(); ++j) {
    const Mode& m = bank.anchors[static_cast<std::size_t>(j)];
    out << "anchor," << j << ',' << fmt(m.cloudiness) << ',' << fmt(m.rain) << ',' << fmt(m.puddles) << '\n';
  }
  for (int j = 0; j < bank.mode_count(); ++j) {
    const auto& per_mode = bank.trajectories[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < per_mode.size(); ++i) {
      const Trajectory& tr = per_mode[i];
      out << "episode," << j << ',' << i << ',' << tr.terminal_time << ',' << tr.out_of_lane_count << ','
          << tr.slow_count << ',' << fmt(tr.terminal_reward) << '\n';
      for (std::size_t h = 0; h < tr.steps.size(); ++h) {
        const Step& s = tr.steps[h];
        out << "step," << j << ',' << i << ',' << h << ',' << s.action << ',' << fmt(s.reward) << ','
            << fmt(s.state.lateral_offset) << ',' << fmt(s.state.heading) << ',' << fmt(s.state.speed) << ','
            << fmt(s.state.curvature) << ',' << fmt(s.mode.cloudiness) << ',' << fmt(s.mode.rain) << ','
            << fmt(s.mode.puddles);
        for (Eigen::Index k = 0; k < s.obs.size(); ++k) out << ',' << fmt(s.obs[k]);
        out << '\n';
      }
    }
  }
  write_text(path, out.str());
}

TrajectoryBank read_bank(const fs::path& path) {
  auto in = open_in(path);
  expect_magic(in, kBankMagic, path);
  TrajectoryBank bank;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# policy_hash=", 0) != 0)
    throw std::runtime_error(path.string() + ": missing bank header");
  {
    std::istringstream hdr(line.substr(2));
    std::string kv;
    while (hdr >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = kv.substr(0, eq);
      const std::string v = kv.substr(eq + 1);
      if (k == "policy_hash") bank.policy_hash = from_hex(v);
      if (k == "horizon") bank.horizon = static_cast<int>(to_int(v));
      if (k == "modes") {
        bank.anchors.resize(static_cast<std::size_t>(to_int(v)));
        bank.trajectories.resize(bank.anchors.size());
      }
    }
  }
  const std::size_t n_modes = bank.anchors.size();
  auto mode_index = [&](const std::string& s) {
    const auto j = to_int(s);
    if (j < 0 || static_cast<std::size_t>(j) >= n_modes) throw std::runtime_error(path.string() + ": bad mode index");
    return static_cast<std::size_t>(j);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (f[0] == "anchor") {
      if (f.size() != 5) throw std::runtime_error(path.string() + ": malformed anchor line");
      bank.anchors[mode_index(f[1])] = Mode{to_double(f[2]), to_double(f[3]), to_double(f[4])};
    } else if (f[0] == "episode") {
      if (f.size() != 7) throw std::runtime_error(path.string() + ": malformed episode line");
      auto& per_mode = bank.trajectories[mode_index(f[1])];
      if (static_cast<std::size_t>(to_int(f[2])) != per_mode.size())
        throw std::runtime_error(path.string() + ": episodes out of order");
      Trajectory tr;
      tr.horizon = bank.horizon;
      tr.terminal_time = static_cast<int>(to_int(f[3]));
      tr.out_of_lane_count = static_cast<int>(to_int(f[4]));
      tr.slow_count = to_int(f[5]);
      tr.terminal_reward = to_double(f[6]);
      per_mode.push_back(std::move(tr));
    } else if (f[0] == "step") {
      if (f.size() < 14) throw std::runtime_error(path.string() + ": malformed step line");
      auto& per_mode = bank.trajectories[mode_index(f[1])];
      const auto idx = static_cast<std::size_t>(to_int(f[2]));
      if (per_mode.empty() || idx != per_mode.size() - 1) throw std::runtime_error(path.string() + ": orphan step");
      Trajectory& tr = per_mode.back();
      if (static_cast<std::size_t>(to_int(f[3])) != tr.steps.size())
        throw std::runtime_error(path.string() + ": steps out of order");
      Step s;
      s.action = static_cast<int>(to_int(f[4]));
      s.reward = to_double(f[5]);
      s.state = VehicleState{to_double(f[6]), to_double(f[7]), to_double(f[8]), to_double(f[9])};
      s.mode = Mode{to_double(f[10]), to_double(f[11]), to_double(f[12])};
      s.obs.resize(static_cast<Eigen::Index>(f.size() - 13));
      for (std::size_t k = 13; k < f.size(); ++k) s.obs[static_cast<Eigen::Index>(k - 13)] = to_double(f[k]);
      tr.steps.push_back(std::move(s));
    } else {
      throw std::runtime_error(path.string() + ": unknown record '" + f[0] + "'");
    }
  }
  bank.validate();
  for (const auto& per_mode : bank.trajectories)
    for (const auto& tr : per_mode)
      if (tr.size() != tr.terminal_time) throw std::runtime_error(path.string() + ": trajectory length mismatch");
  return bank;
}

void write_likelihood(const fs::path& path, const LikelihoodModel& model) {
  std::ostringstream out;
  const Matrix& w = model.weights();
  out << kLikelihoodMagic << '\n'
      << "features " << model.feature_mean().size() << '\n'
      << "classes " << w.rows() << '\n'
      << "holdout_accuracy " << fmt(model.holdout_accuracy) << '\n'
      << "train_accuracy " << fmt(model.train_accuracy) << '\n';
  auto row = [&out](const auto& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << fmt(v[i]);
    out << '\n';
  };
  row(model.feature_mean());
  row(model.feature_scale());
  for (Eigen::Index c = 0; c < w.rows(); ++c) row(Vector(w.row(c).transpose()));
  write_text(path, out.str());
}

LikelihoodModel read_likelihood(const fs::path& path) {
  auto in = open_in(path);
  expect_magic(in, kLikelihoodMagic, path);
  const auto nf = to_int(expect_key(in, "features"));
  const auto nc = to_int(expect_key(in, "classes"));
  const double holdout = to_double(expect_key(in, "holdout_accuracy"));
  const double train = to_double(expect_key(in, "train_accuracy"));
  auto row = [&](Eigen::Index n) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated model");
    const auto f = split(line, ',');
    if (static_cast<Eigen::Index>(f.size()) != n) throw std::runtime_error(path.string() + ": wrong row length");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = to_double(f[static_cast<std::size_t>(i)]);
    return v;
  };
  Vector mean = row(nf);
  Vector scale = row(nf);
  Matrix w(nc, nf + 1);
  for (Eigen::Index c = 0; c < nc; ++c) w.row(c) = row(nf + 1).transpose();
  LikelihoodModel model(std::move(mean), std::move(scale), std::move(w));
  model.holdout_accuracy = holdout;
  model.train_accuracy = train;
  return model;
}

void write_samples(const fs::path& path, const std::vector<LabeledSample>& samples) {
  std::ostringstream out;
  for (const auto& s : samples) {
    out << s.label;
    for (Eigen::Index i = 0; i < s.obs.size(); ++i) out << ',' << fmt(s.obs[i]);
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<LabeledSample> read_samples(const fs::path& path) {
  auto in = open_in(path);
  std::vector<LabeledSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() < 2) throw std::runtime_error(path.string() + ": malformed sample");
    LabeledSample s;
    s.label = static_cast<int>(to_int(f[0]));
    s.obs.resize(static_cast<Eigen::Index>(f.size() - 1));
    for (std::size_t i = 1; i < f.size(); ++i) s.obs[static_cast<Eigen::Index>(i - 1)] = to_double(f[i]);
    out.push_back(std::move(s));
  }
  return out;
}

void write_q_tables(const fs::path& path, const std::vector<QTable>& tables) {
  std::ostringstream out;
  out << kQMagic << '\n' << "tables " << tables.size() << '\n';
  for (const auto& q : tables) {
    out << "mode " << fmt(q.mode.cloudiness) << ' ' << fmt(q.mode.rain) << ' ' << fmt(q.mode.puddles) << '\n'
        << "episodes " << q.episodes << ' ' << (q.converged ? 1 : 0) << '\n'
        << "axes " << q.bucketizer.dimension() << '\n';
    for (const auto& a : q.bucketizer.axes()) out << fmt(a.lo) << ' ' << fmt(a.hi) << ' ' << a.bins << '\n';
    out << "values " << q.values.rows() << ' ' << q.values.cols() << '\n';
    for (Eigen::Index r = 0; r < q.values.rows(); ++r) {
      out << q.visits[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < q.values.cols(); ++c) out << ' ' << fmt(q.values(r, c));
      out << '\n';
    }
  }
  write_text(path, out.str());
}

std::vector<QTable> read_q_tables(const fs::path& path) {
  auto in = open_in(path);
  expect_magic(in, kQMagic, path);
  const auto n = to_int(expect_key(in, "tables"));
  std::vector<QTable> out;
  for (long long t = 0; t < n; ++t) {
    QTable q;
    {
      std::istringstream m(expect_key(in, "mode"));
      m >> q.mode.cloudiness >> q.mode.rain >> q.mode.puddles;
      std::istringstream e(expect_key(in, "episodes"));
      int conv = 0;
      e >> q.episodes >> conv;
      q.converged = conv != 0;
    }
    const auto dims = to_int(expect_key(in, "axes"));
    std::vector<Bucketizer::Axis> axes;
    for (long long d = 0; d < dims; ++d) {
      Bucketizer::Axis a;
      if (!(in >> a.lo >> a.hi >> a.bins)) throw std::runtime_error(path.string() + ": malformed axis");
      axes.push_back(a);
    }
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    q.bucketizer = Bucketizer(std::move(axes));
    std::istringstream shape(expect_key(in, "values"));
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    shape >> rows >> cols;
    if (rows != q.bucketizer.bucket_count()) throw std::runtime_error(path.string() + ": bucket count mismatch");
    q.values.resize(rows, cols);
    q.visits.resize(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!(in >> q.visits[static_cast<std::size_t>(r)])) throw std::runtime_error(path.string() + ": truncated table");
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string tok;
        in >> tok;
        q.values(r, c) = to_double(tok);
      }
    }
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    if (!q.values.allFinite()) throw std::runtime_error(path.string() + ": non-finite Q value");
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace cola::io
