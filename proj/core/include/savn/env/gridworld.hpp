#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "savn/env/scene.hpp"

namespace savn::env {

struct EnvConfig {
  int window = 5;                  // odd; egocentric w x w view
  int success_distance = 1;        // Chebyshev radius, in cells
  double fov_degrees = 90.0;       // full cone angle
  double similarity_epsilon = 0.0; // g threshold on the max-abs difference
  int max_episode_steps = 60;
  double step_reward = -0.01;
  double success_reward = 5.0;
  bool gt_object_termination = false;
};

/// w*w*(3 + classes) + classes.
std::size_t observation_size(const EnvConfig& config, int num_classes);

/// Egocentric window rotated so the heading points up, each cell one-hot over
/// {free, wall, out-of-bounds} followed by a one-hot object class; the target
/// class one-hot is appended.
std::vector<double> observe(const Scene& scene, const Pose& pose, int target, const EnvConfig& config);

/// The part of an observation g compares: the window without the target tail.
std::span<const double> view_part(std::span<const double> obs, int num_classes);

/// 1 iff max |a_i - b_i| <= epsilon. Throws std::invalid_argument on length mismatch.
int similarity_g(std::span<const double> a, std::span<const double> b, double epsilon = 0.0);

bool success_check(const Scene& scene, const Pose& pose, int target, const EnvConfig& config);

struct StepOutcome {
  Pose new_pose;
  bool action_failed = false;
  bool episode_done = false;
  bool success = false;
  double reward = 0.0;
};

/// One transition. Step limits are handled by the caller (see EpisodeRunner).
StepOutcome step(const Scene& scene, const Pose& pose, int target, Action action, const EnvConfig& config);

Pose apply_motion(const Scene& scene, const Pose& pose, Action action, bool* failed = nullptr);

class UnreachableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fewest MoveAhead/Rotate actions from `pose` to any pose passing
/// success_check. Throws UnreachableTarget when none is reachable.
int shortest_path_length(const Scene& scene, const Pose& pose, int target, const EnvConfig& config);

/// Distance to success for every (cell, heading) state, -1 where unreachable.
/// Indexed by scene.index(cell) * 8 + heading.
std::vector<int> goal_distance_field(const Scene& scene, int target, const EnvConfig& config);

/// An action that lowers the remaining distance by one, or Done at distance 0.
Action optimal_action(const Scene& scene, const std::vector<int>& field, const Pose& pose);

/// Episode bookkeeping on top of step(): step limit, cumulative reward.
class EpisodeRunner {
 public:
  EpisodeRunner(const Scene& scene, Pose start, int target, EnvConfig config);

  const Pose& pose() const noexcept { return pose_; }
  int steps() const noexcept { return steps_; }
  bool done() const noexcept { return done_; }
  bool success() const noexcept { return success_; }
  double total_reward() const noexcept { return total_reward_; }
  std::vector<double> observation() const { return observe(*scene_, pose_, target_, config_); }

  /// Reaching max_episode_steps without success ends the episode as a failure.
  StepOutcome act(Action action);

 private:
  const Scene* scene_;
  Pose pose_;
  int target_;
  EnvConfig config_;
  int steps_ = 0;
  bool done_ = false;
  bool success_ = false;
  double total_reward_ = 0.0;
};

}  // namespace savn::env
