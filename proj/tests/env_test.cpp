#include <gtest/gtest.h>

#include "savn/env/gridworld.hpp"
#include "savn/env/task.hpp"
#include "support/env_oracles.hpp"

using namespace savn;
using namespace savn::env;

namespace {

SceneConfig open_room(int size, int classes = 1) {
  return {.width = size, .height = size, .wall_density = 0.0, .object_classes = classes, .min_instances = 1};
}

/// 7-wide corridor scene with one object of class 0 at (1, col).
Scene corridor(int object_col) {
  std::vector<std::uint8_t> walls(3 * 9, 1);
  for (int c = 1; c < 8; ++c) walls[static_cast<std::size_t>(9 + c)] = 0;
  return Scene(9, 3, walls, {{0, {1, object_col}}}, 1, 0);
}

}  // namespace

TEST(Scene, ZeroDensityGivesOpenRoom) {
  Scene s = generate_scene(0, open_room(5));
  EXPECT_EQ(s.free_cell_count(), 9);
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(s.is_wall({0, i}));
    EXPECT_TRUE(s.is_wall({4, i}));
    EXPECT_TRUE(s.is_wall({i, 0}));
    EXPECT_TRUE(s.is_wall({i, 4}));
  }
}

TEST(Scene, GenerationIsDeterministic) {
  SceneConfig cfg;
  EXPECT_EQ(generate_scene(42, cfg), generate_scene(42, cfg));
  EXPECT_NE(generate_scene(42, cfg).walls(), generate_scene(43, cfg).walls());
}

TEST(Scene, DenseScenesStayConnected) {
  SceneConfig cfg{.width = 11, .height = 11, .wall_density = 0.3, .object_classes = 4, .min_instances = 1};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Scene s = generate_scene(seed, cfg);
    ASSERT_TRUE(oracle::flood_fill_connected(s)) << "seed " << seed;
    for (int cls = 0; cls < 4; ++cls) ASSERT_TRUE(s.has_class(cls)) << "seed " << seed;
    for (const auto& o : s.objects()) ASSERT_FALSE(s.is_wall(o.cell));
  }
}

TEST(Scene, RejectsBadConfig) {
  EXPECT_THROW(generate_scene(0, {.width = 4, .height = 5}), ConfigError);
  EXPECT_THROW(generate_scene(0, {.wall_density = 0.5}), ConfigError);
  EXPECT_THROW(generate_scene(0, {.width = 5, .height = 5, .wall_density = 0.0, .object_classes = 9, .min_instances = 1}),
               InfeasibleScene);
}

TEST(Gridworld, ObservationLengthAndDeterminism) {
  Scene s = generate_scene(3, SceneConfig{});
  EnvConfig cfg;
  auto cells = s.walkable_cells();
  Pose p{cells.front(), 3};
  auto a = observe(s, p, 2, cfg);
  EXPECT_EQ(a.size(), 5u * 5u * (3u + 4u) + 4u);
  EXPECT_EQ(a, observe(s, p, 2, cfg));
  EXPECT_EQ(a[a.size() - 4 + 2], 1.0);
}

TEST(Gridworld, MoveIntoWallFails) {
  Scene s = corridor(7);
  EnvConfig cfg;
  Pose p{{1, 1}, 0};  // facing the north wall
  auto out = step(s, p, 0, Action::MoveAhead, cfg);
  EXPECT_TRUE(out.action_failed);
  EXPECT_EQ(out.new_pose, p);
  EXPECT_DOUBLE_EQ(out.reward, -0.01);
  EXPECT_FALSE(out.episode_done);
  EXPECT_EQ(similarity_g(observe(s, p, 0, cfg), observe(s, out.new_pose, 0, cfg)), 1);
}

TEST(Gridworld, DoneNextToTargetSucceeds) {
  Scene s = corridor(5);
  EnvConfig cfg;
  auto out = step(s, {{1, 4}, 2}, 0, Action::Done, cfg);
  EXPECT_TRUE(out.success);
  EXPECT_TRUE(out.episode_done);
  EXPECT_DOUBLE_EQ(out.reward, 5.0 - 0.01);
}

TEST(Gridworld, DoneFarFromTargetFails) {
  Scene s = corridor(7);
  auto out = step(s, {{1, 1}, 2}, 0, Action::Done, EnvConfig{});
  EXPECT_TRUE(out.episode_done);
  EXPECT_FALSE(out.success);
  EXPECT_DOUBLE_EQ(out.reward, -0.01);
}

TEST(Gridworld, RotationsNeverFail) {
  Scene s = corridor(7);
  for (int h = 0; h < 8; ++h) {
    auto l = step(s, {{1, 1}, h}, 0, Action::RotateLeft, EnvConfig{});
    auto r = step(s, {{1, 1}, h}, 0, Action::RotateRight, EnvConfig{});
    EXPECT_FALSE(l.action_failed);
    EXPECT_EQ(l.new_pose.heading, (h + 7) % 8);
    EXPECT_EQ(r.new_pose.heading, (h + 1) % 8);
  }
}

TEST(Gridworld, SuccessRequiresFieldOfView) {
  Scene s = corridor(5);
  EnvConfig cfg;
  EXPECT_TRUE(success_check(s, {{1, 4}, 2}, 0, cfg));   // directly ahead
  EXPECT_FALSE(success_check(s, {{1, 6}, 2}, 0, cfg));  // directly behind
  EXPECT_FALSE(success_check(s, {{1, 3}, 2}, 0, cfg));  // two cells away
}

TEST(Gridworld, SuccessMatchesGeometricOracleEverywhere) {
  SceneConfig sc{.width = 7, .height = 7, .wall_density = 0.2, .object_classes = 2, .min_instances = 2};
  EnvConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Scene s = generate_scene(seed, sc);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 7; ++c)
        for (int h = 0; h < 8; ++h)
          for (int t = 0; t < 2; ++t) {
            if (!s.walkable({r, c})) continue;
            ASSERT_EQ(success_check(s, {{r, c}, h}, t, cfg), oracle::brute_force_success(s, {{r, c}, h}, t));
          }
  }
}

TEST(Gridworld, SimilarityOracle) {
  std::vector<double> a{0, 1, 0}, b{0, 1, 0}, c{1, 0, 0};
  EXPECT_EQ(similarity_g(a, b), 1);
  EXPECT_EQ(similarity_g(a, c), 0);
  EXPECT_EQ(similarity_g(a, c, 1.0), 1);
  EXPECT_THROW(similarity_g(a, std::vector<double>{0, 1}), std::invalid_argument);
}

TEST(Gridworld, FailedMovesAreExactlyTheIdenticalMoveObservations) {
  SceneConfig sc;
  EnvConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Scene s = generate_scene(seed, sc);
    for (const Cell& c : s.walkable_cells()) {
      for (int h = 0; h < 8; ++h) {
        Pose p{c, h};
        auto before = observe(s, p, 0, cfg);
        auto out = step(s, p, 0, Action::MoveAhead, cfg);
        auto after = observe(s, out.new_pose, 0, cfg);
        if (out.action_failed) {
          ASSERT_EQ(similarity_g(before, after), 1);
        } else {
          // Distinct cells; g agrees with plain equality of the encodings.
          ASSERT_EQ(similarity_g(before, after), before == after ? 1 : 0);
        }
      }
    }
  }
}

TEST(Gridworld, ShortestPathExamples) {
  Scene s = corridor(5);
  EnvConfig cfg;
  EXPECT_EQ(shortest_path_length(s, {{1, 4}, 2}, 0, cfg), 0);
  EXPECT_EQ(shortest_path_length(s, {{1, 2}, 2}, 0, cfg), 2);
}

TEST(Gridworld, ShortestPathMatchesIndependentSearch) {
  EnvConfig cfg;
  auto seeds = seed_range(500, 25);
  std::vector<int> targets;
  TaskSet set = make_task_set(seeds, SceneConfig{}, targets, 4, 1, cfg);
  ASSERT_EQ(set.tasks.size(), 100u);
  for (const auto& t : set.tasks) {
    const Scene& s = set.scene_of(t);
    EXPECT_EQ(t.optimal_length, oracle::relaxation_shortest_path(s, t.start, t.target));
  }
}

TEST(Gridworld, OptimalActionsDecreaseDistanceByOne) {
  EnvConfig cfg;
  Scene s = generate_scene(8, SceneConfig{});
  for (int target = 0; target < 4; ++target) {
    auto field = goal_distance_field(s, target, cfg);
    for (const Cell& c : s.walkable_cells())
      for (int h = 0; h < 8; ++h) {
        Pose p{c, h};
        const int d = shortest_path_length(s, p, target, cfg);
        ASSERT_EQ(field[s.index(c) * 8 + static_cast<std::size_t>(h)], d);
        Action a = optimal_action(s, field, p);
        if (d == 0) {
          ASSERT_EQ(a, Action::Done);
        } else {
          ASSERT_EQ(shortest_path_length(s, apply_motion(s, p, a), target, cfg), d - 1);
        }
      }
  }
}

TEST(Gridworld, ReturnAccountingAndStepLimit) {
  Scene s = corridor(7);
  EnvConfig cfg;
  cfg.max_episode_steps = 5;
  EpisodeRunner run(s, {{1, 1}, 0}, 0, cfg);
  int n = 0;
  while (!run.done()) {
    run.act(Action::RotateLeft);
    ++n;
  }
  EXPECT_EQ(n, 5);
  EXPECT_FALSE(run.success());
  EXPECT_NEAR(run.total_reward(), -0.05, 1e-12);
  EXPECT_THROW(run.act(Action::Done), std::logic_error);

  EpisodeRunner win(s, {{1, 4}, 2}, 0, EnvConfig{});
  for (auto a : {Action::MoveAhead, Action::MoveAhead, Action::Done}) win.act(a);
  EXPECT_TRUE(win.success());
  EXPECT_NEAR(win.total_reward(), 5.0 - 0.01 * 3, 1e-12);
}

TEST(Gridworld, GroundTruthTerminationEndsOnArrival) {
  Scene s = corridor(5);
  EnvConfig cfg;
  cfg.gt_object_termination = true;
  EpisodeRunner run(s, {{1, 2}, 2}, 0, cfg);
  run.act(Action::MoveAhead);
  EXPECT_FALSE(run.done());
  auto out = run.act(Action::MoveAhead);
  EXPECT_TRUE(out.episode_done);
  EXPECT_TRUE(out.success);
}

TEST(Tasks, DeterministicAndOutsideSuccess) {
  EnvConfig cfg;
  auto seeds = seed_range(0, 20);
  std::vector<int> targets;
  auto a = make_task_set(seeds, SceneConfig{}, targets, 50, 9, cfg);
  auto b = make_task_set(seeds, SceneConfig{}, targets, 50, 9, cfg);
  EXPECT_EQ(a.tasks, b.tasks);
  ASSERT_EQ(a.tasks.size(), 1000u);
  for (const auto& t : a.tasks) {
    EXPECT_FALSE(success_check(a.scene_of(t), t.start, t.target, cfg));
    EXPECT_GE(t.optimal_length, 1);
  }
}

TEST(Tasks, SplitsMustBeDisjoint) {
  auto train = seed_range(0, 20);
  auto test = seed_range(100, 5);
  EXPECT_NO_THROW(require_disjoint(train, test));
  auto overlap = seed_range(19, 3);
  EXPECT_THROW(require_disjoint(train, overlap), ConfigError);
}

TEST(Tasks, TargetFilterIsRespected) {
  auto seeds = seed_range(0, 5);
  std::vector<int> only{2};
  auto set = make_task_set(seeds, SceneConfig{}, only, 20, 3, EnvConfig{});
  for (const auto& t : set.tasks) EXPECT_EQ(t.target, 2);
}

TEST(SceneJson, RoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Scene s = generate_scene(seed, SceneConfig{});
    auto text = scene_to_json(s).dump();
    EXPECT_EQ(scene_from_json(nlohmann::json::parse(text)), s);
  }
}

TEST(SceneJson, RejectsMalformedGrid) {
  auto j = scene_to_json(generate_scene(1, SceneConfig{}));
  j["grid"][0] = "##";
  EXPECT_THROW(scene_from_json(j), ConfigError);
}
