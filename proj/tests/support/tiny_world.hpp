#pragma once

#include <vector>

#include "savn/env/task.hpp"
#include "savn/model/policy.hpp"

namespace savn::oracle {

/// Small scenes with one target class and a 3x3 view: 37-entry observations.
inline env::EnvConfig tiny_env() {
  env::EnvConfig e;
  e.window = 3;
  return e;
}

inline env::TaskSet tiny_tasks(int scenes = 2, int episodes_per_scene = 10, std::uint64_t seed = 1) {
  env::SceneConfig sc;
  sc.width = 7;
  sc.height = 7;
  sc.wall_density = 0.1;
  sc.object_classes = 1;
  auto seeds = env::seed_range(seed * 1000, static_cast<std::size_t>(scenes));
  return env::make_task_set(seeds, sc, {}, episodes_per_scene, seed, tiny_env());
}

inline model::NetworkConfig tiny_net(std::size_t embed = 2, std::size_t hidden = 2) {
  model::NetworkConfig c;
  c.obs_dim = env::observation_size(tiny_env(), 1);
  c.embed_dim = embed;
  c.hidden_dim = hidden;
  return c;
}

}  // namespace savn::oracle
