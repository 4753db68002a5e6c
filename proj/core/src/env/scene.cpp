#include "savn/env/scene.hpp"

#include <algorithm>
#include <string>

#include "savn/rng.hpp"

namespace savn::env {

namespace {

constexpr int kMaxAttempts = 64;

/// 8-connected components over cells satisfying `open`; returns labels (-1 closed).
template <class Open>
std::vector<int> label_components(int width, int height, Open open, int* count) {
  std::vector<int> label(static_cast<std::size_t>(width * height), -1);
  int next = 0;
  std::vector<Cell> stack;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (!open(Cell{r, c}) || label[static_cast<std::size_t>(r * width + c)] >= 0) continue;
      label[static_cast<std::size_t>(r * width + c)] = next;
      stack.push_back({r, c});
      while (!stack.empty()) {
        Cell cur = stack.back();
        stack.pop_back();
        for (const auto& d : kHeadingStep) {
          Cell n{cur.row + d[0], cur.col + d[1]};
          if (n.row < 0 || n.col < 0 || n.row >= height || n.col >= width) continue;
          auto& l = label[static_cast<std::size_t>(n.row * width + n.col)];
          if (l >= 0 || !open(n)) continue;
          l = next;
          stack.push_back(n);
        }
      }
      ++next;
    }
  }
  if (count) *count = next;
  return label;
}

bool touches_walkable(const Scene& s, Cell c) {
  for (const auto& d : kHeadingStep) {
    if (s.walkable({c.row + d[0], c.col + d[1]})) return true;
  }
  return false;
}

}  // namespace

Scene::Scene(int width, int height, std::vector<std::uint8_t> walls, std::vector<SceneObject> objects,
             int num_classes, std::uint64_t seed)
    : width_(width),
      height_(height),
      num_classes_(num_classes),
      seed_(seed),
      walls_(std::move(walls)),
      objects_(std::move(objects)),
      object_grid_(static_cast<std::size_t>(width * height), -1) {
  if (walls_.size() != object_grid_.size()) throw ConfigError("scene: wall grid size mismatch");
  for (const auto& o : objects_) {
    if (!in_bounds(o.cell) || is_wall(o.cell)) throw ConfigError("scene: object placed on a wall or outside");
    if (o.object_class < 0 || o.object_class >= num_classes_) throw ConfigError("scene: object class out of range");
    if (object_grid_[index(o.cell)] >= 0) throw ConfigError("scene: two objects share a cell");
    object_grid_[index(o.cell)] = o.object_class;
  }
}

bool Scene::has_class(int object_class) const {
  return std::any_of(objects_.begin(), objects_.end(),
                     [&](const SceneObject& o) { return o.object_class == object_class; });
}

int Scene::free_cell_count() const {
  return static_cast<int>(std::count(walls_.begin(), walls_.end(), std::uint8_t{0}));
}

std::vector<Cell> Scene::walkable_cells() const {
  std::vector<Cell> cells;
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (walkable({r, c})) cells.push_back({r, c});
  return cells;
}

bool operator==(const Scene& a, const Scene& b) {
  return a.width_ == b.width_ && a.height_ == b.height_ && a.num_classes_ == b.num_classes_ &&
         a.seed_ == b.seed_ && a.walls_ == b.walls_ && a.objects_ == b.objects_;
}

bool walkable_connected(const Scene& scene) {
  int count = 0;
  label_components(scene.width(), scene.height(), [&](Cell c) { return scene.walkable(c); }, &count);
  return count == 1;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.width < 5 || cfg.height < 5) throw ConfigError("scene: width and height must be at least 5");
  if (!(cfg.wall_density >= 0.0 && cfg.wall_density <= 0.4)) {
    throw ConfigError("scene: wall_density must lie in [0, 0.4]");
  }
  if (cfg.object_classes < 1 || cfg.min_instances < 1) {
    throw ConfigError("scene: need at least one object class and one instance per class");
  }
  const int W = cfg.width, H = cfg.height;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<std::uint8_t> walls(static_cast<std::size_t>(W * H), 0);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const bool border = r == 0 || c == 0 || r == H - 1 || c == W - 1;
        const double u = rng.uniform();
        walls[static_cast<std::size_t>(r * W + c)] = border || u < cfg.wall_density;
      }
    }
    // Keep only the largest free component.
    int count = 0;
    auto label = label_components(W, H, [&](Cell x) { return walls[static_cast<std::size_t>(x.row * W + x.col)] == 0; }, &count);
    if (count == 0) continue;
    std::vector<int> sizes(static_cast<std::size_t>(count), 0);
    for (int l : label)
      if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
    const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < walls.size(); ++i)
      if (label[i] != keep) walls[i] = 1;

    std::vector<Cell> candidates;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        if (!walls[static_cast<std::size_t>(r * W + c)]) candidates.push_back({r, c});

    std::vector<SceneObject> objects;
    bool ok = true;
    for (int cls = 0; cls < cfg.object_classes && ok; ++cls) {
      for (int inst = 0; inst < cfg.min_instances && ok; ++inst) {
        // Fisher-Yates with our own draws keeps placement platform-independent.
        std::vector<Cell> order = candidates;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        bool placed = false;
        for (const Cell& cell : order) {
          auto trial = objects;
          trial.push_back({cls, cell});
          Scene s(W, H, walls, trial, cfg.object_classes, seed);
          if (s.walkable_cells().size() < 2 || !walkable_connected(s)) continue;
          if (!std::all_of(trial.begin(), trial.end(), [&](const SceneObject& o) { return touches_walkable(s, o.cell); })) continue;
          objects = std::move(trial);
          candidates.erase(std::find(candidates.begin(), candidates.end(), cell));
          placed = true;
          break;
        }
        ok = placed;
      }
    }
    if (ok) return Scene(W, H, std::move(walls), std::move(objects), cfg.object_classes, seed);
  }
  throw InfeasibleScene("scene: could not place " + std::to_string(cfg.object_classes * cfg.min_instances) +
                        " objects in connected free space for seed " + std::to_string(seed));
}

}  // namespace savn::env
