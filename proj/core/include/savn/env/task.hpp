#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "savn/env/gridworld.hpp"
#include "savn/env/scene.hpp"

namespace savn::env {

/// One navigation task: a scene, the target object class, and a start pose.
struct Task {
  std::size_t scene_index = 0;  // into the owning TaskSet's scenes
  std::uint64_t scene_seed = 0;
  int target = 0;
  Pose start;
  int optimal_length = 0;
  friend bool operator==(const Task&, const Task&) = default;
};

struct TaskSet {
  std::vector<Scene> scenes;
  std::vector<Task> tasks;

  const Scene& scene_of(const Task& t) const { return scenes.at(t.scene_index); }
};

/// For each scene seed, `episodes_per_scene` tasks: the target is the class of
/// a uniformly drawn object instance (restricted to `targets` when non-empty)
/// and the start pose a uniformly drawn walkable pose that does not already
/// pass the success check.
TaskSet make_task_set(std::span<const std::uint64_t> scene_seeds, const SceneConfig& scene_config,
                      std::span<const int> targets, int episodes_per_scene, std::uint64_t rng_seed,
                      const EnvConfig& env_config);

/// Same, over already generated scenes.
TaskSet make_task_set(std::vector<Scene> scenes, std::span<const int> targets, int episodes_per_scene,
                      std::uint64_t rng_seed, const EnvConfig& env_config);

/// Throws ConfigError if any seed appears in both lists.
void require_disjoint(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Consecutive seeds [first, first + count).
std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const Task& task);
Task task_from_json(const nlohmann::json& j);

}  // namespace savn::env
