#pragma once

#include "latf/model.hpp"
#include "latf/spib.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace latf::io {

inline constexpr const char* kToolVersion = "0.1.0";

/// Malformed or inconsistent configuration. `line` is 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

struct SystemSection {
  std::string kind = "three-hole";  // three-hole | lj7 | external
  std::vector<std::string> trajectories;  // external only
};

/// Unset optional fields take the defaults of the selected system.
struct SimulationSection {
  std::uint64_t seed = 1;
  double kT = 1.0;                      // three-hole
  std::vector<double> temperatures;     // lj7: one trajectory per temperature
  std::optional<double> friction;
  std::optional<double> timestep;
  std::optional<std::int64_t> n_steps;
  std::optional<std::int64_t> stride;
  double confinement_radius = 2.0;
  double confinement_k = 10.0;
  double evaporation_radius = 3.0;
};

struct FeaturizeSection {
  std::string descriptor;  // xy | coordination | moments | raw; empty picks the system default
  int initial_states = 10;
  std::uint64_t seed = 1;
};

struct TrainingSection {
  spib::TrainingConfig model;
  int lag = 10;
  int folds = 5;
  double tau = 0.0;
  std::vector<double> tau_grid{0.0, 1.0, 2.0, 3.0};
  std::vector<double> train_temperatures;  // empty: every simulated temperature
  int jobs = 1;
};

struct EvaluationSection {
  int bins = 50;
  double alpha = 1e-10;
  int msm_lag = 10;
  int gmrq_folds = 5;
  int microstates = 100;
  int waypoints = 50;
  int top_pathways = 5;
  std::size_t n_samples = 100000;
};

struct RunConfig {
  SystemSection system;
  SimulationSection simulation;
  FeaturizeSection featurize;
  TrainingSection training;
  EvaluationSection evaluation;
  std::string output_dir;

  /// Fills system-dependent defaults and checks value ranges.
  void resolve();
  /// Every key with its effective value, in the parser's format.
  std::string resolved_text() const;
  std::uint64_t hash() const;

  double reference_temperature() const;  // lowest training temperature
  std::vector<double> simulated_temperatures() const;
  std::vector<double> training_temperatures() const;
};

/// Line-oriented "[section]" / "key = value" format; '#' starts a comment.
/// Unknown sections or keys and unparsable values raise ConfigError with the
/// line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "LATFCKPT", u32 version, u64 header length, JSON header, then the named
/// float64 blocks listed in the header, each prefixed by its u64 length.
void save_checkpoint(const std::filesystem::path& path, const spib::LatfModel& model);
/// Throws on corruption (with the byte offset) and when the stored latent
/// dimension differs from `expected_latent_dim`.
spib::LatfModel load_checkpoint(const std::filesystem::path& path,
                                std::optional<int> expected_latent_dim = std::nullopt);

// ---------------------------------------------------------------------------
// Tables and manifests

std::string format_double(double v);

/// Comma-separated text table with a header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_; }

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::filesystem::path path_;
};

std::uint64_t file_hash(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;
  std::uint64_t hash = 0;
};

/// manifest.json: tool version, command, config hash, seed, hashed inputs
/// and outputs. Also writes config.resolved next to it.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);

/// One integer per line.
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels(const std::filesystem::path& path);

}  // namespace latf::io
