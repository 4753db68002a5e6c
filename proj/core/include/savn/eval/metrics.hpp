#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace savn::eval {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EpisodeResult {
  std::size_t task_index = 0;
  bool success = false;
  int path_length = 0;     // actions taken
  int optimal_length = 0;  // shortest action count from the start pose
  std::vector<bool> failed;  // per action
  std::vector<int> actions;
  std::string scene_type = "gridworld";
  std::size_t scene_index = 0;
  int target = 0;
  double total_reward = 0.0;
  int inner_updates = 0;

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

void to_json(nlohmann::json& j, const EpisodeResult& r);
void from_json(const nlohmann::json& j, EpisodeResult& r);

double success_rate(std::span<const EpisodeResult> results);
double spl(std::span<const EpisodeResult> results);
std::vector<EpisodeResult> filter_min_optimal(std::span<const EpisodeResult> results, int threshold = 5);

struct FailedActionCurve {
  std::vector<double> ratio;        // failed / actions, per bucket (0 where a bucket is empty)
  std::vector<std::size_t> actions; // actions that fell into each bucket
};

/// Step s of an episode with P actions lands in bucket floor(s * buckets / P).
FailedActionCurve failed_action_curve(std::span<const EpisodeResult> results, std::size_t buckets = 10);

struct MetricsReport {
  std::size_t episodes = 0;
  double success_rate = 0.0;
  double spl = 0.0;
  std::size_t episodes_L5 = 0;
  std::optional<double> success_rate_L5;  // absent when no episode has L >= 5
  std::optional<double> spl_L5;
  FailedActionCurve failed_curve;
  std::map<std::string, std::size_t> counts_per_scene_type;
};

MetricsReport summarize(std::span<const EpisodeResult> results, std::size_t buckets = 10, int min_optimal = 5);
void to_json(nlohmann::json& j, const MetricsReport& r);

/// Evaluation results of one model: one result set per training seed, all on
/// the same task list.
struct ModelResults {
  std::string model;
  std::vector<std::vector<EpisodeResult>> per_seed;
};

struct ComparisonRow {
  std::string model;
  std::string split;
  double success = 0.0, spl = 0.0;
  std::optional<double> success_L5, spl_L5;
  std::size_t n_episodes = 0;
  std::size_t seed_count = 0;
  double std_success = 0.0, std_spl = 0.0;
};

/// Mean and sample standard deviation over seeds of the per-seed metrics.
/// Throws when any result set was produced on a different task list.
std::vector<ComparisonRow> compare(std::span<const ModelResults> models, const std::string& split);

void write_csv(std::ostream& out, std::span<const ComparisonRow> rows);
nlohmann::json rows_to_json(std::span<const ComparisonRow> rows);

}  // namespace savn::eval
