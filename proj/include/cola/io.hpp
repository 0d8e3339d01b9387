#pragma once

#include "cola/baselines.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cola::io {

namespace fs = std::filesystem;

/// FNV-1a of a file's bytes; throws if the file cannot be read.
std::uint64_t file_hash(const fs::path& path);

std::string read_text(const fs::path& path);
/// Writes atomically enough for our purposes: parent directories are created.
void write_text(const fs::path& path, const std::string& text);

struct PolicyFile {
  Policy policy = Policy::linear(1, 2);
  PolicyParams theta;
  std::uint64_t catalog_hash = 0;
};

/// Versioned text format: header lines then one parameter per line (%.17g).
void write_policy(const fs::path& path, const Policy& policy, const PolicyParams& theta, std::uint64_t catalog_hash);
PolicyFile read_policy(const fs::path& path);

/// One line per record; `anchor`, `episode` and `step` lines share the file.
void write_bank(const fs::path& path, const TrajectoryBank& bank);
TrajectoryBank read_bank(const fs::path& path);

void write_likelihood(const fs::path& path, const LikelihoodModel& model);
LikelihoodModel read_likelihood(const fs::path& path);

/// Line-delimited `label,f1,...,fn` records.
void write_samples(const fs::path& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> read_samples(const fs::path& path);

/// All per-mode tables in one file, with the bucketing metadata.
void write_q_tables(const fs::path& path, const std::vector<QTable>& tables);
std::vector<QTable> read_q_tables(const fs::path& path);

/// %.17g formatting used by every writer.
std::string fmt(double x);

}  // namespace cola::io
