#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "savn/env/task.hpp"
#include "savn/eval/metrics.hpp"
#include "savn/trainer/trainer.hpp"

namespace savn::trainer {

/// Anything that can play one evaluation episode.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual eval::EpisodeResult run(const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                                  Rng& rng) const = 0;
};

/// Uniform over all actions, Done included.
class RandomAgent : public Agent {
 public:
  explicit RandomAgent(int max_episode_steps = 60) : max_steps_(max_episode_steps) {}
  std::string name() const override { return "random"; }
  eval::EpisodeResult run(const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                          Rng& rng) const override;

 private:
  int max_steps_;
};

/// A trained network, optionally adapting through interaction gradients.
class PolicyAgent : public Agent {
 public:
  PolicyAgent(model::PolicyModel model, ad::ParamVector theta, ad::ParamVector phi, TrainerConfig cfg, bool adapt);
  std::string name() const override;
  eval::EpisodeResult run(const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                          Rng& rng) const override;

 private:
  model::PolicyModel model_;
  ad::ParamVector theta_, phi_;
  TrainerConfig cfg_;
};

class NearestNeighborError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every (observation, optimal action) pair over all poses of a set of scenes,
/// grouped by target class. Observations must be 0/1 vectors; they are stored
/// bit-packed and compared by Hamming distance, which equals squared L2.
class NearestNeighborIndex {
 public:
  static NearestNeighborIndex build(std::span<const env::Scene> scenes, const env::EnvConfig& env_config);

  /// Optimal action of the nearest stored observation for this target; ties
  /// go to the earliest entry.
  env::Action lookup(int target, std::span<const double> obs) const;
  std::size_t size() const;
  std::size_t size(int target) const;

  void add(int target, std::span<const double> obs, env::Action action);

 private:
  struct Entries {
    std::vector<std::uint64_t> bits;  // words_per_obs per entry
    std::vector<env::Action> actions;
  };
  std::size_t words_ = 0;
  std::size_t obs_len_ = 0;
  std::map<int, Entries> by_target_;

  std::vector<std::uint64_t> pack(std::span<const double> obs) const;
};

class NearestNeighborAgent : public Agent {
 public:
  NearestNeighborAgent(std::shared_ptr<const NearestNeighborIndex> index, int max_episode_steps = 60)
      : index_(std::move(index)), max_steps_(max_episode_steps) {}
  std::string name() const override { return "nearest_neighbor"; }
  eval::EpisodeResult run(const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                          Rng& rng) const override;

 private:
  std::shared_ptr<const NearestNeighborIndex> index_;
  int max_steps_;
};

/// Episodes for the first `max_tasks` tasks (all when 0); task i uses
/// Rng(mix_seed(seed, i)), so results do not depend on `threads`.
std::vector<eval::EpisodeResult> evaluate_agent(const Agent& agent, const env::TaskSet& tasks,
                                                const env::EnvConfig& env_config, std::uint64_t seed,
                                                std::size_t max_tasks = 0, int threads = 1);

}  // namespace savn::trainer
