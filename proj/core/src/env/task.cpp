#include "savn/env/task.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "savn/rng.hpp"

namespace savn::env {

namespace {

constexpr int kMaxPoseDraws = 10000;

}  // namespace

TaskSet make_task_set(std::vector<Scene> scenes, std::span<const int> targets, int episodes_per_scene,
                      std::uint64_t rng_seed, const EnvConfig& env_config) {
  TaskSet set;
  set.scenes = std::move(scenes);
  Rng rng(mix_seed(rng_seed, 0x7a5c));
  for (std::size_t si = 0; si < set.scenes.size(); ++si) {
    const Scene& scene = set.scenes[si];
    std::vector<const SceneObject*> pool;
    for (const auto& o : scene.objects()) {
      if (targets.empty() || std::find(targets.begin(), targets.end(), o.object_class) != targets.end()) {
        pool.push_back(&o);
      }
    }
    if (pool.empty()) throw ConfigError("task set: scene " + std::to_string(scene.seed()) + " has no target object");
    const auto cells = scene.walkable_cells();
    for (int e = 0; e < episodes_per_scene; ++e) {
      Task t;
      t.scene_index = si;
      t.scene_seed = scene.seed();
      t.target = pool[rng.below(pool.size())]->object_class;
      bool found = false;
      for (int draw = 0; draw < kMaxPoseDraws && !found; ++draw) {
        Pose p{cells[rng.below(cells.size())], static_cast<int>(rng.below(kNumHeadings))};
        if (success_check(scene, p, t.target, env_config)) continue;
        t.start = p;
        found = true;
      }
      if (!found) throw InfeasibleScene("task set: no start pose outside the success region");
      t.optimal_length = shortest_path_length(scene, t.start, t.target, env_config);
      set.tasks.push_back(t);
    }
  }
  return set;
}

TaskSet make_task_set(std::span<const std::uint64_t> scene_seeds, const SceneConfig& scene_config,
                      std::span<const int> targets, int episodes_per_scene, std::uint64_t rng_seed,
                      const EnvConfig& env_config) {
  std::vector<Scene> scenes;
  scenes.reserve(scene_seeds.size());
  for (auto s : scene_seeds) scenes.push_back(generate_scene(s, scene_config));
  return make_task_set(std::move(scenes), targets, episodes_per_scene, rng_seed, env_config);
}

void require_disjoint(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::set<std::uint64_t> left(a.begin(), a.end());
  for (auto s : b) {
    if (left.count(s)) throw ConfigError("scene seed " + std::to_string(s) + " appears in two splits");
  }
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < scene.height(); ++r) {
    std::string row;
    for (int c = 0; c < scene.width(); ++c) row += scene.is_wall({r, c}) ? '#' : '.';
    rows.push_back(row);
  }
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : scene.objects()) objects.push_back({o.object_class, o.cell.row, o.cell.col});
  return {{"seed", scene.seed()},
          {"width", scene.width()},
          {"height", scene.height()},
          {"num_classes", scene.num_classes()},
          {"grid", rows},
          {"objects", objects}};
}

Scene scene_from_json(const nlohmann::json& j) {
  const int width = j.at("width").get<int>();
  const int height = j.at("height").get<int>();
  const auto& rows = j.at("grid");
  if (static_cast<int>(rows.size()) != height) throw ConfigError("scene json: grid height mismatch");
  std::vector<std::uint8_t> walls;
  for (const auto& row : rows) {
    const auto s = row.get<std::string>();
    if (static_cast<int>(s.size()) != width) throw ConfigError("scene json: grid width mismatch");
    for (char ch : s) {
      if (ch != '#' && ch != '.') throw ConfigError("scene json: unexpected grid character");
      walls.push_back(ch == '#');
    }
  }
  std::vector<SceneObject> objects;
  for (const auto& o : j.at("objects")) objects.push_back({o.at(0).get<int>(), {o.at(1).get<int>(), o.at(2).get<int>()}});
  return Scene(width, height, std::move(walls), std::move(objects), j.at("num_classes").get<int>(),
               j.at("seed").get<std::uint64_t>());
}

nlohmann::json task_to_json(const Task& t) {
  return {{"scene_index", t.scene_index},
          {"scene_seed", t.scene_seed},
          {"target", t.target},
          {"row", t.start.cell.row},
          {"col", t.start.cell.col},
          {"heading", t.start.heading},
          {"optimal_length", t.optimal_length}};
}

Task task_from_json(const nlohmann::json& j) {
  Task t;
  t.scene_index = j.at("scene_index").get<std::size_t>();
  t.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  t.target = j.at("target").get<int>();
  t.start = {{j.at("row").get<int>(), j.at("col").get<int>()}, j.at("heading").get<int>()};
  t.optimal_length = j.at("optimal_length").get<int>();
  return t;
}

}  // namespace savn::env
