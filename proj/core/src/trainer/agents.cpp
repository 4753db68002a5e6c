#include "savn/trainer/agents.hpp"

#include <bit>
#include <thread>

namespace savn::trainer {
namespace {

eval::EpisodeResult start_result(const env::TaskSet& tasks, std::size_t task_index) {
  const auto& task = tasks.tasks.at(task_index);
  eval::EpisodeResult r;
  r.task_index = task_index;
  r.optimal_length = task.optimal_length;
  r.scene_index = task.scene_index;
  r.target = task.target;
  return r;
}

void finish_result(eval::EpisodeResult& r, const env::EpisodeRunner& runner) {
  r.success = runner.success();
  r.path_length = runner.steps();
  r.total_reward = runner.total_reward();
}

}  // namespace

eval::EpisodeResult RandomAgent::run(const env::TaskSet& tasks, std::size_t task_index,
                                     const env::EnvConfig& env_config, Rng& rng) const {
  auto r = start_result(tasks, task_index);
  const auto& task = tasks.tasks[task_index];
  env::EnvConfig ec = env_config;
  ec.max_episode_steps = max_steps_;
  env::EpisodeRunner runner(tasks.scene_of(task), task.start, task.target, ec);
  const std::vector<double> uniform(env::kNumActions, 1.0 / env::kNumActions);
  while (!runner.done()) {
    const int a = model::sample_action(uniform, rng);
    const auto out = runner.act(static_cast<env::Action>(a));
    r.actions.push_back(a);
    r.failed.push_back(out.action_failed);
  }
  finish_result(r, runner);
  return r;
}

PolicyAgent::PolicyAgent(model::PolicyModel model, ad::ParamVector theta, ad::ParamVector phi, TrainerConfig cfg,
                         bool adapt)
    : model_(std::move(model)), theta_(std::move(theta)), phi_(std::move(phi)), cfg_(cfg) {
  if (!adapt) cfg_.alpha = 0.0;
  cfg_.validate();
  check_compatible(cfg_, model_.config());
}

std::string PolicyAgent::name() const { return agent_tag(cfg_, model_.config()); }

eval::EpisodeResult PolicyAgent::run(const env::TaskSet& tasks, std::size_t task_index,
                                     const env::EnvConfig& env_config, Rng& rng) const {
  return run_episode(model_, theta_, phi_, tasks, task_index, env_config, cfg_, rng, Mode::Test).result;
}

std::vector<std::uint64_t> NearestNeighborIndex::pack(std::span<const double> obs) const {
  std::vector<std::uint64_t> bits(words_, 0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i] == 1.0) {
      bits[i / 64] |= std::uint64_t{1} << (i % 64);
    } else if (obs[i] != 0.0) {
      throw NearestNeighborError("nearest neighbour index: observations must be 0/1 vectors");
    }
  }
  return bits;
}

void NearestNeighborIndex::add(int target, std::span<const double> obs, env::Action action) {
  if (obs_len_ == 0) {
    obs_len_ = obs.size();
    words_ = (obs_len_ + 63) / 64;
  }
  if (obs.size() != obs_len_) throw NearestNeighborError("nearest neighbour index: observation length mismatch");
  auto bits = pack(obs);
  auto& e = by_target_[target];
  e.bits.insert(e.bits.end(), bits.begin(), bits.end());
  e.actions.push_back(action);
}

NearestNeighborIndex NearestNeighborIndex::build(std::span<const env::Scene> scenes,
                                                 const env::EnvConfig& env_config) {
  NearestNeighborIndex index;
  for (const auto& scene : scenes) {
    for (int target = 0; target < scene.num_classes(); ++target) {
      if (!scene.has_class(target)) continue;
      const auto field = env::goal_distance_field(scene, target, env_config);
      for (const auto& cell : scene.walkable_cells()) {
        for (int h = 0; h < env::kNumHeadings; ++h) {
          const env::Pose pose{cell, h};
          if (field[static_cast<std::size_t>(scene.index(cell)) * env::kNumHeadings + static_cast<std::size_t>(h)] < 0) {
            continue;
          }
          index.add(target, env::observe(scene, pose, target, env_config), env::optimal_action(scene, field, pose));
        }
      }
    }
  }
  return index;
}

env::Action NearestNeighborIndex::lookup(int target, std::span<const double> obs) const {
  auto it = by_target_.find(target);
  if (it == by_target_.end() || it->second.actions.empty()) {
    throw NearestNeighborError("nearest neighbour index has no entries for target " + std::to_string(target));
  }
  if (obs.size() != obs_len_) throw NearestNeighborError("nearest neighbour query: observation length mismatch");
  const auto q = pack(obs);
  const auto& e = it->second;
  std::size_t best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (std::size_t n = 0; n < e.actions.size(); ++n) {
    int d = 0;
    for (std::size_t w = 0; w < words_ && d < best_d; ++w) d += std::popcount(e.bits[n * words_ + w] ^ q[w]);
    if (d < best_d) {
      best_d = d;
      best = n;
      if (d == 0) break;
    }
  }
  return e.actions[best];
}

std::size_t NearestNeighborIndex::size() const {
  std::size_t n = 0;
  for (const auto& [t, e] : by_target_) n += e.actions.size();
  return n;
}

std::size_t NearestNeighborIndex::size(int target) const {
  auto it = by_target_.find(target);
  return it == by_target_.end() ? 0 : it->second.actions.size();
}

eval::EpisodeResult NearestNeighborAgent::run(const env::TaskSet& tasks, std::size_t task_index,
                                              const env::EnvConfig& env_config, Rng&) const {
  auto r = start_result(tasks, task_index);
  const auto& task = tasks.tasks[task_index];
  env::EnvConfig ec = env_config;
  ec.max_episode_steps = max_steps_;
  env::EpisodeRunner runner(tasks.scene_of(task), task.start, task.target, ec);
  while (!runner.done()) {
    const auto a = index_->lookup(task.target, runner.observation());
    const auto out = runner.act(a);
    r.actions.push_back(static_cast<int>(a));
    r.failed.push_back(out.action_failed);
  }
  finish_result(r, runner);
  return r;
}

std::vector<eval::EpisodeResult> evaluate_agent(const Agent& agent, const env::TaskSet& tasks,
                                                const env::EnvConfig& env_config, std::uint64_t seed,
                                                std::size_t max_tasks, int threads) {
  const std::size_t n = max_tasks == 0 ? tasks.tasks.size() : std::min(max_tasks, tasks.tasks.size());
  std::vector<eval::EpisodeResult> results(n);
  auto run_one = [&](std::size_t i) {
    Rng rng(mix_seed(seed, i));
    results[i] = agent.run(tasks, i, env_config, rng);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace savn::trainer
