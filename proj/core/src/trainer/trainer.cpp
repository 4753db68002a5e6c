#include "savn/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "savn/autodiff/meta_grad.hpp"
#include "savn/trainer/agents.hpp"

namespace savn::trainer {

std::string to_string(InteractionKind kind) {
  switch (kind) {
    case InteractionKind::None: return "none";
    case InteractionKind::Learned: return "learned";
    case InteractionKind::Diversity: return "diversity";
    case InteractionKind::Prediction: return "prediction";
  }
  return "none";
}

InteractionKind interaction_kind_from_string(const std::string& name) {
  if (name == "none") return InteractionKind::None;
  if (name == "learned") return InteractionKind::Learned;
  if (name == "diversity") return InteractionKind::Diversity;
  if (name == "prediction") return InteractionKind::Prediction;
  throw TrainerConfigError("unknown interaction loss '" + name + "' (expected none, learned, diversity, prediction)");
}

void TrainerConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw TrainerConfigError("alpha must be finite and >= 0");
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw TrainerConfigError("beta1 and beta2 must be >= 0");
  if (k < 1) throw TrainerConfigError("k must be at least 1");
  if (max_inner_updates > ad::kMaxInnerUpdates) {
    throw TrainerConfigError("max_inner_updates must be at most " + std::to_string(ad::kMaxInnerUpdates));
  }
  if (max_episode_steps < 1) throw TrainerConfigError("max_episode_steps must be at least 1");
  if (workers < 1) throw TrainerConfigError("workers must be at least 1");
  nav.validate();
}

env::EnvConfig TrainerConfig::apply_to(env::EnvConfig env) const {
  env.max_episode_steps = max_episode_steps;
  env.gt_object_termination = gt_object_termination;
  return env;
}

void to_json(nlohmann::json& j, const TrainerConfig& c) {
  j = {{"alpha", c.alpha},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"k", c.k},
       {"max_inner_updates", c.max_inner_updates},
       {"cap_at_test", c.cap_at_test},
       {"max_episode_steps", c.max_episode_steps},
       {"interaction", to_string(c.interaction)},
       {"first_order", c.first_order},
       {"prediction_auxiliary", c.prediction_auxiliary},
       {"workers", c.workers},
       {"total_episodes", c.total_episodes},
       {"seed", c.seed},
       {"gt_object_termination", c.gt_object_termination},
       {"gamma", c.nav.gamma},
       {"value_weight", c.nav.value_weight},
       {"entropy_weight", c.nav.entropy_weight},
       {"validation_interval", c.validation_interval},
       {"validation_episodes", c.validation_episodes},
       {"diagnostic_interval", c.diagnostic_interval}};
}

void from_json(const nlohmann::json& j, TrainerConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.k = j.value("k", c.k);
  c.max_inner_updates = j.value("max_inner_updates", c.max_inner_updates);
  c.cap_at_test = j.value("cap_at_test", c.cap_at_test);
  c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
  if (j.contains("interaction")) c.interaction = interaction_kind_from_string(j.at("interaction").get<std::string>());
  c.first_order = j.value("first_order", c.first_order);
  c.prediction_auxiliary = j.value("prediction_auxiliary", c.prediction_auxiliary);
  c.workers = j.value("workers", c.workers);
  c.total_episodes = j.value("total_episodes", c.total_episodes);
  c.seed = j.value("seed", c.seed);
  c.gt_object_termination = j.value("gt_object_termination", c.gt_object_termination);
  c.nav.gamma = j.value("gamma", c.nav.gamma);
  c.nav.value_weight = j.value("value_weight", c.nav.value_weight);
  c.nav.entropy_weight = j.value("entropy_weight", c.nav.entropy_weight);
  c.validation_interval = j.value("validation_interval", c.validation_interval);
  c.validation_episodes = j.value("validation_episodes", c.validation_episodes);
  c.diagnostic_interval = j.value("diagnostic_interval", c.diagnostic_interval);
}

std::string agent_tag(const TrainerConfig& cfg, const model::NetworkConfig& net) {
  if (cfg.interaction == InteractionKind::None || cfg.alpha == 0.0) {
    if (cfg.prediction_auxiliary) return "a3c_prediction";
    if (net.memory_k > 0) return "a3c_memory";
    return "a3c";
  }
  switch (cfg.interaction) {
    case InteractionKind::Learned: return "savn";
    case InteractionKind::Diversity: return "savn_diversity";
    case InteractionKind::Prediction: return "savn_prediction";
    case InteractionKind::None: break;
  }
  return "a3c";
}

void check_compatible(const TrainerConfig& cfg, const model::NetworkConfig& net) {
  const bool needs_q = cfg.interaction == InteractionKind::Prediction || cfg.prediction_auxiliary;
  if (needs_q && !net.with_success_head) {
    throw TrainerConfigError("the prediction loss needs a network with a success head");
  }
}

ad::ParamVector init_loss_params(const TrainerConfig& cfg, const model::NetworkConfig& net, std::uint64_t seed) {
  if (cfg.interaction != InteractionKind::Learned) return {};
  return objectives::init_interaction_loss(net.hidden_dim, net.num_actions, seed);
}

Var interaction_loss(InteractionKind kind, const std::map<std::string, Var>& phi,
                     std::span<const objectives::StepRecord> window, const std::vector<double>& next_obs,
                     int num_classes, double similarity_epsilon) {
  std::vector<int> actions;
  for (const auto& s : window) actions.push_back(s.action);
  switch (kind) {
    case InteractionKind::Learned: {
      std::vector<Var> hidden, policies;
      for (const auto& s : window) hidden.push_back(s.hidden), policies.push_back(s.pi);
      return objectives::learned_interaction_loss(phi, hidden, policies, window.size());
    }
    case InteractionKind::Diversity: {
      std::vector<std::vector<double>> obs;
      std::vector<Var> log_pis;
      for (const auto& s : window) obs.push_back(s.obs), log_pis.push_back(s.log_pi);
      return objectives::diversity_loss(obs, actions, log_pis, num_classes, similarity_epsilon);
    }
    case InteractionKind::Prediction: {
      std::vector<std::vector<double>> obs;
      std::vector<Var> q;
      for (const auto& s : window) {
        if (!s.q) throw TrainerConfigError("prediction loss: the network has no success head");
        obs.push_back(s.obs);
        q.push_back(*s.q);
      }
      obs.push_back(next_obs);
      return objectives::prediction_loss(q, actions, obs, num_classes, similarity_epsilon);
    }
    case InteractionKind::None: break;
  }
  throw TrainerConfigError("interaction loss requested with kind 'none'");
}

namespace {

std::vector<double> to_vector(const Var& v) { return {v.value().data().begin(), v.value().data().end()}; }

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

EpisodeOutput run_episode(const model::PolicyModel& model, const ad::ParamVector& theta, const ad::ParamVector& phi,
                          const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                          const TrainerConfig& cfg, Rng& rng, Mode mode) {
  cfg.validate();
  check_compatible(cfg, model.config());
  const env::Task& task = tasks.tasks.at(task_index);
  const env::Scene& scene = tasks.scene_of(task);
  const env::EnvConfig ec = cfg.apply_to(env_config);
  const bool train = mode == Mode::Train;
  const bool adapting = cfg.alpha > 0.0 && cfg.interaction != InteractionKind::None;
  const std::size_t cap =
      train || cfg.cap_at_test ? cfg.max_inner_updates : std::numeric_limits<std::size_t>::max();
  const std::size_t memory_k = model.config().memory_k;

  EpisodeOutput out;
  out.theta = train || adapting ? Var::parameter(theta.as_tensor(), "theta") : Var::constant(theta.as_tensor());
  out.phi = train && cfg.interaction == InteractionKind::Learned ? Var::parameter(phi.as_tensor(), "phi")
                                                                  : Var::constant(phi.as_tensor());
  const auto phi_bound = phi.bind(out.phi);

  Var current = out.theta;
  model::BoundPolicy bound = model.bind(current);
  model::HiddenState hidden = model.initial_state();
  std::vector<Var> memory;
  env::EpisodeRunner runner(scene, task.start, task.target, ec);
  auto& steps = out.traj.steps;
  std::vector<double> obs = runner.observation();
  bool last_was_done = false;

  while (!runner.done()) {
    auto po = model.forward(bound, obs, hidden, memory);
    objectives::StepRecord s;
    s.obs = obs;
    s.hidden = hidden.h;
    s.v = po.v;
    s.q = po.q;
    if (po.q) {
      s.pi = model::effective_policy(po.pi, *po.q);
      s.log_pi = model::effective_log_policy(po.log_pi, po.pi, *po.q);
    } else {
      s.pi = po.pi;
      s.log_pi = po.log_pi;
    }
    s.action = model::sample_action(s.pi.value().data(), rng);
    const auto outcome = runner.act(static_cast<env::Action>(s.action));
    last_was_done = s.action == static_cast<int>(env::Action::Done);
    s.reward = outcome.reward;
    s.action_failed = outcome.action_failed;
    out.result.failed.push_back(outcome.action_failed);
    out.result.actions.push_back(s.action);
    steps.push_back(std::move(s));

    hidden = po.next;
    if (memory_k > 0) {
      memory.push_back(hidden.h);
      if (memory.size() > memory_k) memory.erase(memory.begin());
    }
    obs = runner.observation();

    const std::size_t t = steps.size();
    if (runner.done() || !adapting || t % cfg.k != 0 || out.update_steps.size() >= cap) continue;

    const auto window = std::span<const objectives::StepRecord>(steps).subspan(t - cfg.k, cfg.k);
    Var loss = interaction_loss(cfg.interaction, phi_bound, window, obs, scene.num_classes(), ec.similarity_epsilon);
    out.interaction_losses.push_back(loss.item());
    Var g = ad::grad(loss, current, {.create_graph = train && !cfg.first_order, .allow_unused = true});
    if (train) {
      current = ad::sub(current, ad::scale(g, cfg.alpha));
    } else {
      std::vector<double> next = to_vector(current);
      const auto gv = g.value().data();
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= cfg.alpha * gv[i];
      current = Var::parameter(ad::Tensor::vector(std::move(next)), "theta");
      hidden = {hidden.h.detach(), hidden.c.detach()};
      for (auto& m : memory) m = m.detach();
    }
    bound = model.bind(current);
    out.update_steps.push_back(static_cast<int>(t));
  }

  out.theta_adapted = current;
  out.traj.final_obs = obs;
  out.traj.success = runner.success();
  out.traj.truncated = !runner.success() && !last_was_done && runner.steps() >= ec.max_episode_steps;
  if (out.traj.truncated) {
    ad::NoGradGuard no_grad;
    out.traj.bootstrap_value = model.forward(bound, obs, hidden, memory).v.item();
  }

  auto& r = out.result;
  r.task_index = task_index;
  r.success = runner.success();
  r.path_length = runner.steps();
  r.optimal_length = task.optimal_length;
  r.scene_index = task.scene_index;
  r.target = task.target;
  r.total_reward = runner.total_reward();
  r.inner_updates = static_cast<int>(out.update_steps.size());
  return out;
}

MetaGradient meta_gradient(const EpisodeOutput& episode, const TrainerConfig& cfg, int num_classes,
                           double similarity_epsilon) {
  Var total = objectives::nav_loss(episode.traj, cfg.nav);
  MetaGradient mg;
  mg.nav_loss = total.item();
  if (cfg.prediction_auxiliary) {
    std::vector<Var> q;
    std::vector<int> actions;
    std::vector<std::vector<double>> obs;
    for (const auto& s : episode.traj.steps) {
      if (!s.q) throw TrainerConfigError("prediction auxiliary loss: the network has no success head");
      q.push_back(*s.q);
      actions.push_back(s.action);
      obs.push_back(s.obs);
    }
    obs.push_back(episode.traj.final_obs);
    Var aux = objectives::prediction_loss(q, actions, obs, num_classes, similarity_epsilon);
    mg.aux_loss = aux.item();
    total = ad::add(total, aux);
  }
  std::vector<Var> wrt{episode.theta, episode.phi};
  auto g = ad::grad(total, wrt, {.create_graph = false, .allow_unused = true});
  mg.theta = to_vector(g[0]);
  mg.phi = to_vector(g[1]);
  return mg;
}

Adam::Adam(std::size_t size, double lr, double b1, double b2, double eps)
    : lr_(lr), b1_(b1), b2_(b2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam: parameter/gradient size does not match optimizer state");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

SharedParamStore::SharedParamStore(ad::ParamVector theta, ad::ParamVector phi, double beta1, double beta2)
    : theta_(std::move(theta)),
      phi_(std::move(phi)),
      adam_theta_(theta_.size(), beta1),
      adam_phi_(phi_.size(), beta2) {}

SharedParamStore::Snapshot SharedParamStore::snapshot() const {
  std::lock_guard lock(mu_);
  return {theta_, phi_, version_};
}

std::uint64_t SharedParamStore::apply(const std::vector<double>& grad_theta, const std::vector<double>& grad_phi) {
  std::lock_guard lock(mu_);
  adam_theta_.step(theta_.values(), grad_theta);
  if (phi_.size() > 0) adam_phi_.step(phi_.values(), grad_phi);
  return ++version_;
}

std::uint64_t SharedParamStore::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

GradientAlignment gradient_alignment(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient_alignment: length mismatch");
  GradientAlignment out;
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.inner += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na > 0.0 && nb > 0.0) out.cosine = std::clamp(out.inner / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return out;
}

std::optional<GradientAlignment> grad_similarity_diagnostic(const model::PolicyModel& model,
                                                            const ad::ParamVector& theta,
                                                            const ad::ParamVector& phi, const env::TaskSet& tasks,
                                                            std::size_t task_index,
                                                            const env::EnvConfig& env_config,
                                                            const TrainerConfig& cfg, Rng& rng) {
  if (cfg.interaction == InteractionKind::None) {
    throw TrainerConfigError("gradient diagnostic needs an interaction loss");
  }
  TrainerConfig probe = cfg;
  probe.alpha = 0.0;
  auto ep = run_episode(model, theta, phi, tasks, task_index, env_config, probe, rng, Mode::Train);
  const auto& steps = ep.traj.steps;
  if (steps.size() < cfg.k) return std::nullopt;
  const auto& next_obs = steps.size() > cfg.k ? steps[cfg.k].obs : ep.traj.final_obs;
  const int classes = tasks.scene_of(tasks.tasks.at(task_index)).num_classes();
  Var l_int = interaction_loss(cfg.interaction, phi.bind(ep.phi), std::span(steps).first(cfg.k), next_obs, classes,
                               env_config.similarity_epsilon);
  Var l_nav = objectives::nav_loss(ep.traj, cfg.nav);
  auto g_int = to_vector(ad::grad(l_int, ep.theta, {.create_graph = false, .allow_unused = true}));
  auto g_nav = to_vector(ad::grad(l_nav, ep.theta, {.create_graph = false, .allow_unused = true}));
  return gradient_alignment(g_int, g_nav);
}

TrainResult train(const model::PolicyModel& model, const env::TaskSet& train_tasks, const env::TaskSet* validation,
                  const env::EnvConfig& env_config, const TrainerConfig& cfg, ad::ParamVector theta,
                  ad::ParamVector phi, const TrainHooks& hooks) {
  cfg.validate();
  check_compatible(cfg, model.config());
  if (train_tasks.tasks.empty()) throw TrainerConfigError("train: empty task set");
  if (!model.layout().same_layout(theta)) throw TrainerConfigError("train: theta does not match the network layout");

  SharedParamStore store(std::move(theta), std::move(phi), cfg.beta1, cfg.beta2);
  std::atomic<std::size_t> next_episode{0};
  std::mutex log_mu, best_mu;
  TrainResult result;
  std::atomic<std::size_t> skipped{0};
  const std::string tag = agent_tag(cfg, model.config());

  auto emit = [&](const nlohmann::json& rec) {
    if (!hooks.log) return;
    std::lock_guard lock(log_mu);
    hooks.log(rec);
  };

  auto validate_snapshot = [&](std::size_t episode, const SharedParamStore::Snapshot& snap) {
    PolicyAgent agent(model, snap.theta, snap.phi, cfg, true);
    const std::size_t n = std::min(cfg.validation_episodes, validation->tasks.size());
    auto results = evaluate_agent(agent, *validation, env_config, mix_seed(cfg.seed, 0x7a11da7e), n);
    const double success = eval::success_rate(results);
    bool best = false;
    {
      std::lock_guard lock(best_mu);
      if (!result.best_validation_success || success > *result.best_validation_success) {
        best = true;
        result.best_validation_success = success;
        result.best_episode = episode;
        result.theta = snap.theta;
        result.phi = snap.phi;
      }
    }
    emit({{"type", "validation"}, {"episode", episode}, {"version", snap.version}, {"success", success},
          {"spl", eval::spl(results)}, {"best", best}, {"agent", tag}});
    if (hooks.checkpoint) hooks.checkpoint(episode, snap.theta, snap.phi, success, best);
  };

  auto worker = [&](int worker_id) {
    for (;;) {
      const std::size_t ep = next_episode.fetch_add(1);
      if (ep >= cfg.total_episodes) break;
      Rng rng(mix_seed(cfg.seed, ep));
      const std::size_t task_index = rng.below(train_tasks.tasks.size());
      const auto snap = store.snapshot();
      const auto& task = train_tasks.tasks[task_index];
      const int classes = train_tasks.scene_of(task).num_classes();

      nlohmann::json rec = {{"type", "episode"}, {"episode", ep}, {"worker", worker_id}, {"agent", tag},
                            {"task_index", task_index}, {"scene_index", task.scene_index}, {"target", task.target}};
      try {
        auto out = run_episode(model, snap.theta, snap.phi, train_tasks, task_index, env_config, cfg, rng,
                               Mode::Train);
        auto mg = meta_gradient(out, cfg, classes, env_config.similarity_epsilon);
        rec["success"] = out.result.success;
        rec["steps"] = out.result.path_length;
        rec["optimal_length"] = out.result.optimal_length;
        rec["reward"] = out.result.total_reward;
        rec["inner_updates"] = out.result.inner_updates;
        rec["interaction_losses"] = out.interaction_losses;
        rec["nav_loss"] = mg.nav_loss;
        if (cfg.prediction_auxiliary) rec["aux_loss"] = mg.aux_loss;
        rec["grad_norm_theta"] = norm(mg.theta);
        rec["grad_norm_phi"] = norm(mg.phi);
        if (!all_finite(mg.theta) || !all_finite(mg.phi)) {
          rec["skipped"] = "non-finite gradient";
          ++skipped;
        } else {
          rec["version"] = store.apply(mg.theta, mg.phi);
        }
      } catch (const ad::NonFiniteError& e) {
        rec["skipped"] = e.what();
        ++skipped;
      }

      if (cfg.diagnostic_interval > 0 && cfg.interaction != InteractionKind::None &&
          (ep + 1) % cfg.diagnostic_interval == 0) {
        Rng probe_rng(mix_seed(cfg.seed ^ 0xd1a6, ep));
        try {
          auto d = grad_similarity_diagnostic(model, snap.theta, snap.phi, train_tasks, task_index, env_config, cfg,
                                              probe_rng);
          if (d) rec["diagnostic"] = {{"inner", d->inner}, {"cosine", d->cosine ? nlohmann::json(*d->cosine) : nlohmann::json(nullptr)}};
        } catch (const ad::NonFiniteError&) {
          rec["diagnostic"] = nullptr;
        }
      }
      emit(rec);

      if (validation && cfg.validation_interval > 0 && (ep + 1) % cfg.validation_interval == 0) {
        validate_snapshot(ep + 1, store.snapshot());
      }
    }
  };

  if (cfg.workers == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker, w);
  }

  auto final_snap = store.snapshot();
  result.final_theta = final_snap.theta;
  result.final_phi = final_snap.phi;
  result.version = final_snap.version;
  result.skipped_batches = skipped.load();
  if (!result.best_validation_success) {
    result.theta = final_snap.theta;
    result.phi = final_snap.phi;
  }
  return result;
}

}  // namespace savn::trainer
