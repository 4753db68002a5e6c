#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "savn/env/task.hpp"
#include "savn/eval/metrics.hpp"
#include "savn/model/policy.hpp"
#include "savn/trainer/trainer.hpp"

namespace savn::cli {

namespace fs = std::filesystem;

/// Bad configuration, flags, or incompatible inputs. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable that relative output directories are resolved against.
inline constexpr const char* kOutputRootEnv = "SAVN_OUTPUT_ROOT";

struct SplitSpec {
  std::uint64_t first_seed = 0;  // scene seeds are [first_seed, first_seed + scenes)
  std::size_t scenes = 0;
  int episodes_per_scene = 0;
};

struct EvalSpec {
  std::size_t episodes = 1000;  // per model and seed; capped by the split's task count
  std::size_t buckets = 10;
  int threads = 1;
  std::string split = "test";
};

struct ExperimentConfig {
  std::uint64_t seed = 0;  // network init, training, and evaluation randomness
  std::string output_dir = "runs/default";
  env::EnvConfig env;
  env::SceneConfig scenes;
  std::vector<int> targets;  // empty: every class present in a scene
  SplitSpec train{1000, 20, 50};
  SplitSpec val{2000, 5, 20};
  SplitSpec test{3000, 5, 200};
  model::NetworkConfig network;    // obs_dim is derived from env and scenes
  trainer::TrainerConfig trainer;  // its seed is the experiment seed
  EvalSpec eval;

  /// Throws ConfigError.
  void validate() const;
  fs::path output_root() const;
  model::NetworkConfig resolved_network() const;
  env::EnvConfig resolved_env() const;
  trainer::TrainerConfig resolved_trainer() const;
  const SplitSpec& split(const std::string& name) const;
};

nlohmann::json config_to_json(const ExperimentConfig& c);
/// Keys not present in the default configuration are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Sets a dotted path ("trainer.alpha=0.01"). The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the optional file, then overrides in order.
ExperimentConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides);

std::string sha256_hex(std::string_view bytes);

/// Writes the sidecar with wall-clock time and host; never hashed.
void write_metadata(const fs::path& path, const std::string& command, const nlohmann::json& extra = {});

// ---- commands ----

/// Writes scene and task fixtures for every split plus a manifest of seeds and
/// hashes; returns the manifest.
nlohmann::json cmd_generate(const ExperimentConfig& cfg);

struct Fixtures {
  env::TaskSet train, val, test;
  const env::TaskSet& split(const std::string& name) const;
};

/// Reads fixtures back, checking file hashes and that they were generated
/// with this configuration.
Fixtures load_fixtures(const ExperimentConfig& cfg);

struct TrainOptions {
  std::string run_name;                     // default: agent tag and seed
  std::vector<std::size_t> inner_updates;   // more than one: one run directory per value
  bool quiet = false;
};

/// Returns the run directories written.
std::vector<fs::path> cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts);

struct EvalOptions {
  std::vector<fs::path> checkpoints;
  std::vector<std::string> baselines;  // "random", "nearest_neighbor"
  std::string name = "default";
  std::optional<std::size_t> inner_updates;  // test-time cap override
  bool skip_no_adapt = false;
};

std::vector<eval::ComparisonRow> cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts);

nlohmann::json cmd_diagnose(const ExperimentConfig& cfg, const fs::path& checkpoint, std::size_t episodes,
                            const std::string& split, const std::string& name);

/// "3", "0,2,4", or "0..4".
std::vector<std::size_t> parse_count_list(const std::string& text);

}  // namespace savn::cli
