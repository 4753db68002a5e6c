#include <benchmark/benchmark.h>

#include "savn/autodiff/meta_grad.hpp"
#include "savn/env/task.hpp"
#include "savn/trainer/agents.hpp"
#include "savn/trainer/trainer.hpp"

using namespace savn;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(ad::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform() - 0.5;
  return t;
}

struct World {
  env::EnvConfig env;
  env::TaskSet tasks;
  model::NetworkConfig net;
  World() {
    env::SceneConfig sc;
    sc.width = sc.height = 9;
    sc.object_classes = 2;
    tasks = env::make_task_set(env::seed_range(1000, 4), sc, {}, 10, 1, env);
    net.obs_dim = env::observation_size(env, sc.object_classes);
  }
};

const World& world() {
  static const World w;
  return w;
}

}  // namespace

static void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n}, 2);
  for (auto _ : state) {
    Var w = Var::parameter(a);
    Var y = ad::sum(ad::tanh(ad::matmul(w, Var::constant(b))));
    benchmark::DoNotOptimize(ad::grad(y, w));
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64)->Arg(256);

static void BM_SecondOrderThroughUpdates(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({32}, 3), w0 = random_tensor({32 * 32}, 4);
  auto loss = [&](const Var& p) {
    Var h = ad::tanh(ad::matmul(ad::reshape(p, {32, 32}), Var::constant(x)));
    return ad::sum(ad::mul(h, h));
  };
  for (auto _ : state) benchmark::DoNotOptimize(ad::grad_through_update(w0, 0.1, loss, loss, steps));
}
BENCHMARK(BM_SecondOrderThroughUpdates)->DenseRange(1, 4);

static void BM_EnvironmentStep(benchmark::State& state) {
  const auto& w = world();
  const auto& task = w.tasks.tasks[0];
  env::Pose pose = task.start;
  int i = 0;
  for (auto _ : state) {
    auto out = env::step(w.tasks.scene_of(task), pose, task.target, static_cast<env::Action>(i++ % 3), w.env);
    pose = out.new_pose;
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_EnvironmentStep);

static void BM_PolicyForward(benchmark::State& state) {
  const auto& w = world();
  auto net = w.net;
  net.hidden_dim = net.embed_dim = static_cast<std::size_t>(state.range(0));
  model::PolicyModel m(net);
  auto theta = m.init_params(0);
  auto bound = m.bind(Var::constant(Tensor::vector(theta.values())));
  const auto& task = w.tasks.tasks[0];
  const auto obs = env::observe(w.tasks.scene_of(task), task.start, task.target, w.env);
  auto hidden = m.initial_state();
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(bound, obs, hidden));
}
BENCHMARK(BM_PolicyForward)->Arg(32)->Arg(64)->Arg(128);

static void BM_TrainEpisodeWithMetaGradient(benchmark::State& state) {
  const auto& w = world();
  model::PolicyModel m(w.net);
  trainer::TrainerConfig cfg;
  cfg.interaction = state.range(0) ? trainer::InteractionKind::Learned : trainer::InteractionKind::None;
  cfg.alpha = state.range(0) ? 0.01 : 0.0;
  auto theta = m.init_params(0);
  theta.view("actor.b")[static_cast<std::size_t>(env::Action::Done)] = -40.0;  // full-length episodes
  auto phi = trainer::init_loss_params(cfg, w.net, 1);
  std::uint64_t ep = 0;
  for (auto _ : state) {
    Rng rng(ep);
    auto out = trainer::run_episode(m, theta, phi, w.tasks, ep++ % w.tasks.tasks.size(), w.env, cfg, rng,
                                    trainer::Mode::Train);
    benchmark::DoNotOptimize(trainer::meta_gradient(out, cfg, 2, 0.0));
  }
  state.SetLabel(state.range(0) ? "savn" : "a3c");
}
BENCHMARK(BM_TrainEpisodeWithMetaGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_NearestNeighbourLookup(benchmark::State& state) {
  const auto& w = world();
  const auto index = trainer::NearestNeighborIndex::build(w.tasks.scenes, w.env);
  const auto& task = w.tasks.tasks[3];
  const auto obs = env::observe(w.tasks.scene_of(task), task.start, task.target, w.env);
  for (auto _ : state) benchmark::DoNotOptimize(index.lookup(task.target, obs));
  state.counters["entries"] = static_cast<double>(index.size());
}
BENCHMARK(BM_NearestNeighbourLookup);

BENCHMARK_MAIN();
