#include "savn/env/gridworld.hpp"

#include <cmath>
#include <deque>
#include <numbers>

namespace savn::env {

std::size_t observation_size(const EnvConfig& config, int num_classes) {
  const auto w = static_cast<std::size_t>(config.window);
  const auto k = static_cast<std::size_t>(num_classes);
  return w * w * (3 + k) + k;
}

std::vector<double> observe(const Scene& scene, const Pose& pose, int target, const EnvConfig& config) {
  const int w = config.window;
  const int half = w / 2;
  const int classes = scene.num_classes();
  const std::size_t per_cell = 3 + static_cast<std::size_t>(classes);
  std::vector<double> obs(observation_size(config, classes), 0.0);
  const auto& fwd = kHeadingStep[static_cast<std::size_t>(pose.heading)];
  const auto& right = kHeadingStep[static_cast<std::size_t>((pose.heading + 2) % kNumHeadings)];
  for (int r = 0; r < w; ++r) {
    for (int c = 0; c < w; ++c) {
      const int ahead = half - r;
      const int side = c - half;
      Cell cell{pose.cell.row + ahead * fwd[0] + side * right[0], pose.cell.col + ahead * fwd[1] + side * right[1]};
      double* slot = obs.data() + static_cast<std::size_t>(r * w + c) * per_cell;
      if (!scene.in_bounds(cell)) {
        slot[2] = 1.0;
      } else if (scene.is_wall(cell)) {
        slot[1] = 1.0;
      } else {
        slot[0] = 1.0;
        if (int o = scene.object_at(cell); o >= 0) slot[3 + o] = 1.0;
      }
    }
  }
  if (target < 0 || target >= classes) throw ConfigError("observe: target class out of range");
  obs[obs.size() - static_cast<std::size_t>(classes) + static_cast<std::size_t>(target)] = 1.0;
  return obs;
}

std::span<const double> view_part(std::span<const double> obs, int num_classes) {
  return obs.first(obs.size() - static_cast<std::size_t>(num_classes));
}

int similarity_g(std::span<const double> a, std::span<const double> b, double epsilon) {
  if (a.size() != b.size()) throw std::invalid_argument("similarity_g: observation lengths differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > epsilon) return 0;
  }
  return 1;
}

bool success_check(const Scene& scene, const Pose& pose, int target, const EnvConfig& config) {
  const auto& h = kHeadingStep[static_cast<std::size_t>(pose.heading)];
  const double half_fov = config.fov_degrees / 2.0 * std::numbers::pi / 180.0;
  const double hn = std::hypot(h[0], h[1]);
  for (const auto& o : scene.objects()) {
    if (o.object_class != target) continue;
    const int dr = o.cell.row - pose.cell.row;
    const int dc = o.cell.col - pose.cell.col;
    const int cheb = std::max(std::abs(dr), std::abs(dc));
    if (cheb == 0 || cheb > config.success_distance) continue;
    const double cosang = (dr * h[0] + dc * h[1]) / (std::hypot(dr, dc) * hn);
    if (std::acos(std::clamp(cosang, -1.0, 1.0)) <= half_fov + 1e-9) return true;
  }
  return false;
}

Pose apply_motion(const Scene& scene, const Pose& pose, Action action, bool* failed) {
  Pose next = pose;
  bool blocked = false;
  switch (action) {
    case Action::MoveAhead: {
      const auto& d = kHeadingStep[static_cast<std::size_t>(pose.heading)];
      Cell to{pose.cell.row + d[0], pose.cell.col + d[1]};
      if (scene.walkable(to)) {
        next.cell = to;
      } else {
        blocked = true;
      }
      break;
    }
    case Action::RotateLeft:
      next.heading = (pose.heading + kNumHeadings - 1) % kNumHeadings;
      break;
    case Action::RotateRight:
      next.heading = (pose.heading + 1) % kNumHeadings;
      break;
    case Action::Done:
      break;
  }
  if (failed) *failed = blocked;
  return next;
}

StepOutcome step(const Scene& scene, const Pose& pose, int target, Action action, const EnvConfig& config) {
  StepOutcome out;
  out.reward = config.step_reward;
  out.new_pose = apply_motion(scene, pose, action, &out.action_failed);
  if (action == Action::Done) {
    out.episode_done = true;
    out.success = success_check(scene, pose, target, config);
  } else if (config.gt_object_termination && success_check(scene, out.new_pose, target, config)) {
    out.episode_done = true;
    out.success = true;
  }
  if (out.success) out.reward += config.success_reward;
  return out;
}

namespace {

std::size_t state_index(const Scene& s, const Pose& p) {
  return s.index(p.cell) * kNumHeadings + static_cast<std::size_t>(p.heading);
}

}  // namespace

int shortest_path_length(const Scene& scene, const Pose& pose, int target, const EnvConfig& config) {
  std::vector<int> dist(static_cast<std::size_t>(scene.width() * scene.height() * kNumHeadings), -1);
  std::deque<Pose> queue{pose};
  dist[state_index(scene, pose)] = 0;
  while (!queue.empty()) {
    Pose cur = queue.front();
    queue.pop_front();
    const int d = dist[state_index(scene, cur)];
    if (success_check(scene, cur, target, config)) return d;
    for (Action a : {Action::MoveAhead, Action::RotateLeft, Action::RotateRight}) {
      Pose next = apply_motion(scene, cur, a);
      auto& nd = dist[state_index(scene, next)];
      if (nd >= 0) continue;
      nd = d + 1;
      queue.push_back(next);
    }
  }
  throw UnreachableTarget("no pose satisfying the success check is reachable for target class " +
                          std::to_string(target));
}

std::vector<int> goal_distance_field(const Scene& scene, int target, const EnvConfig& config) {
  std::vector<int> dist(static_cast<std::size_t>(scene.width() * scene.height() * kNumHeadings), -1);
  std::deque<Pose> queue;
  for (const Cell& c : scene.walkable_cells()) {
    for (int h = 0; h < kNumHeadings; ++h) {
      Pose p{c, h};
      if (success_check(scene, p, target, config)) {
        dist[state_index(scene, p)] = 0;
        queue.push_back(p);
      }
    }
  }
  while (!queue.empty()) {
    Pose cur = queue.front();
    queue.pop_front();
    const int d = dist[state_index(scene, cur)];
    // Predecessors: rotations from the neighbouring headings, and a move from behind.
    std::vector<Pose> preds{{cur.cell, (cur.heading + 1) % kNumHeadings},
                            {cur.cell, (cur.heading + kNumHeadings - 1) % kNumHeadings}};
    const auto& step = kHeadingStep[static_cast<std::size_t>(cur.heading)];
    Cell behind{cur.cell.row - step[0], cur.cell.col - step[1]};
    if (scene.walkable(behind)) preds.push_back({behind, cur.heading});
    for (const Pose& p : preds) {
      auto& pd = dist[state_index(scene, p)];
      if (pd >= 0) continue;
      pd = d + 1;
      queue.push_back(p);
    }
  }
  return dist;
}

Action optimal_action(const Scene& scene, const std::vector<int>& field, const Pose& pose) {
  const int d = field[state_index(scene, pose)];
  if (d < 0) throw UnreachableTarget("optimal_action: pose cannot reach the target");
  if (d == 0) return Action::Done;
  for (Action a : {Action::MoveAhead, Action::RotateLeft, Action::RotateRight}) {
    if (field[state_index(scene, apply_motion(scene, pose, a))] == d - 1) return a;
  }
  throw UnreachableTarget("optimal_action: inconsistent distance field");
}

EpisodeRunner::EpisodeRunner(const Scene& scene, Pose start, int target, EnvConfig config)
    : scene_(&scene), pose_(start), target_(target), config_(config) {}

StepOutcome EpisodeRunner::act(Action action) {
  if (done_) throw std::logic_error("EpisodeRunner: episode already finished");
  StepOutcome out = step(*scene_, pose_, target_, action, config_);
  pose_ = out.new_pose;
  ++steps_;
  total_reward_ += out.reward;
  if (!out.episode_done && steps_ >= config_.max_episode_steps) out.episode_done = true;
  done_ = out.episode_done;
  success_ = out.success;
  return out;
}

}  // namespace savn::env
