#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace savn::env {

enum class Action : std::uint8_t { MoveAhead = 0, RotateLeft = 1, RotateRight = 2, Done = 3 };
inline constexpr int kNumActions = 4;
inline constexpr int kNumHeadings = 8;

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Heading 0 faces north (decreasing row); each step clockwise adds 45 degrees.
struct Pose {
  Cell cell;
  int heading = 0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Unit step (row, col) for each heading.
inline constexpr std::array<std::array<int, 2>, kNumHeadings> kHeadingStep{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1},
}};

struct SceneObject {
  int object_class = 0;
  Cell cell;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneConfig {
  int width = 11;
  int height = 11;
  double wall_density = 0.25;
  int object_classes = 4;
  int min_instances = 1;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InfeasibleScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid scene. Border cells are walls; objects occupy non-wall cells and block
/// movement; the walkable cells (non-wall, no object) form one 8-connected
/// region and every object touches it.
class Scene {
 public:
  Scene() = default;
  Scene(int width, int height, std::vector<std::uint8_t> walls, std::vector<SceneObject> objects,
        int num_classes, std::uint64_t seed);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int num_classes() const noexcept { return num_classes_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::uint8_t>& walls() const noexcept { return walls_; }
  const std::vector<SceneObject>& objects() const noexcept { return objects_; }

  bool in_bounds(Cell c) const noexcept { return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_; }
  bool is_wall(Cell c) const { return walls_[index(c)] != 0; }
  /// Object class at `c`, or -1.
  int object_at(Cell c) const { return object_grid_[index(c)]; }
  bool walkable(Cell c) const { return in_bounds(c) && !is_wall(c) && object_at(c) < 0; }
  bool has_class(int object_class) const;
  int free_cell_count() const;
  std::vector<Cell> walkable_cells() const;
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * width_ + c.col); }

  friend bool operator==(const Scene& a, const Scene& b);

 private:
  int width_ = 0;
  int height_ = 0;
  int num_classes_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> walls_;
  std::vector<SceneObject> objects_;
  std::vector<int> object_grid_;
};

/// Deterministic in (seed, config). Throws ConfigError for out-of-range
/// settings and InfeasibleScene when objects cannot be placed after retries.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config);

/// True if the walkable cells form one 8-connected component.
bool walkable_connected(const Scene& scene);

}  // namespace savn::env
