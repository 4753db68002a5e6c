#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "savn/autodiff/graph.hpp"
#include "savn/env/gridworld.hpp"
#include "savn/env/task.hpp"
#include "savn/eval/metrics.hpp"
#include "savn/model/policy.hpp"
#include "savn/objectives/losses.hpp"
#include "savn/rng.hpp"

namespace savn::trainer {

using ad::Var;

enum class InteractionKind { None, Learned, Diversity, Prediction };

std::string to_string(InteractionKind kind);
InteractionKind interaction_kind_from_string(const std::string& name);

class TrainerConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainerConfig {
  double alpha = 1e-4;  // inner SGD step
  double beta1 = 1e-4;  // Adam step for theta
  double beta2 = 1e-4;  // Adam step for phi
  std::size_t k = 6;
  std::size_t max_inner_updates = 4;
  bool cap_at_test = true;
  int max_episode_steps = 60;
  InteractionKind interaction = InteractionKind::Learned;
  bool first_order = false;
  /// Adds the prediction loss over the whole trajectory to the outer objective.
  bool prediction_auxiliary = false;
  int workers = 1;
  std::size_t total_episodes = 1000;
  std::uint64_t seed = 0;
  bool gt_object_termination = false;
  objectives::NavLossConfig nav;
  std::size_t validation_interval = 0;  // episodes between validations; 0 disables
  std::size_t validation_episodes = 100;
  std::size_t diagnostic_interval = 0;  // episodes between gradient-alignment probes; 0 disables

  void validate() const;
  /// Environment settings with this config's step limit and termination mode.
  env::EnvConfig apply_to(env::EnvConfig env) const;
};

void to_json(nlohmann::json& j, const TrainerConfig& c);
void from_json(const nlohmann::json& j, TrainerConfig& c);

/// "a3c", "a3c_memory", "a3c_prediction", "savn", "savn_diversity", ...
std::string agent_tag(const TrainerConfig& cfg, const model::NetworkConfig& net);

/// The network shape a config needs: a success head whenever the prediction
/// loss is used, in or out of the inner loop.
void check_compatible(const TrainerConfig& cfg, const model::NetworkConfig& net);

/// Layout of phi for this trainer; empty unless the interaction loss is learned.
ad::ParamVector init_loss_params(const TrainerConfig& cfg, const model::NetworkConfig& net, std::uint64_t seed);

enum class Mode { Train, Test };

struct EpisodeOutput {
  objectives::TrajectoryRecord traj;
  Var theta;          // leaf the rollout started from
  Var phi;            // leaf for the learned loss (empty tensor otherwise)
  Var theta_adapted;  // after the last inner update
  std::vector<int> update_steps;  // step counts at which inner updates fired
  std::vector<double> interaction_losses;
  eval::EpisodeResult result;
};

/// Interaction loss over a window of steps; `next_obs` follows the last step.
Var interaction_loss(InteractionKind kind, const std::map<std::string, Var>& phi,
                     std::span<const objectives::StepRecord> window, const std::vector<double>& next_obs,
                     int num_classes, double similarity_epsilon);

/// One episode with the adaptive policy. In train mode every step stays a
/// differentiable function of the theta and phi leaves; in test mode graphs are
/// cut after each inner update.
EpisodeOutput run_episode(const model::PolicyModel& model, const ad::ParamVector& theta, const ad::ParamVector& phi,
                          const env::TaskSet& tasks, std::size_t task_index, const env::EnvConfig& env_config,
                          const TrainerConfig& cfg, Rng& rng, Mode mode);

struct MetaGradient {
  std::vector<double> theta;
  std::vector<double> phi;
  double nav_loss = 0.0;
  double aux_loss = 0.0;
};

/// Gradients of the outer objective with respect to the episode's theta and
/// phi leaves, through every inner update.
MetaGradient meta_gradient(const EpisodeOutput& episode, const TrainerConfig& cfg, int num_classes,
                           double similarity_epsilon);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grad);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  double lr_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

class SharedParamStore {
 public:
  struct Snapshot {
    ad::ParamVector theta;
    ad::ParamVector phi;
    std::uint64_t version = 0;
  };

  SharedParamStore(ad::ParamVector theta, ad::ParamVector phi, double beta1, double beta2);

  Snapshot snapshot() const;
  /// Applies one Adam step to each of theta and phi; returns the new version.
  std::uint64_t apply(const std::vector<double>& grad_theta, const std::vector<double>& grad_phi);
  std::uint64_t version() const;

 private:
  mutable std::mutex mu_;
  ad::ParamVector theta_, phi_;
  Adam adam_theta_, adam_phi_;
  std::uint64_t version_ = 0;
};

struct GradientAlignment {
  double inner = 0.0;
  std::optional<double> cosine;  // absent when either gradient is zero
};

GradientAlignment gradient_alignment(std::span<const double> a, std::span<const double> b);

/// Alignment of the interaction-loss gradient over the first k steps with the
/// navigation-loss gradient over the whole episode, both at theta without
/// adaptation. Absent when the episode is shorter than k.
std::optional<GradientAlignment> grad_similarity_diagnostic(const model::PolicyModel& model,
                                                            const ad::ParamVector& theta,
                                                            const ad::ParamVector& phi, const env::TaskSet& tasks,
                                                            std::size_t task_index,
                                                            const env::EnvConfig& env_config,
                                                            const TrainerConfig& cfg, Rng& rng);

struct TrainHooks {
  std::function<void(const nlohmann::json&)> log;
  /// Called after each validation with the evaluated parameters.
  std::function<void(std::size_t episode, const ad::ParamVector& theta, const ad::ParamVector& phi, double success,
                     bool best)>
      checkpoint;
};

struct TrainResult {
  ad::ParamVector theta, phi;            // best on validation (final when validation is off)
  ad::ParamVector final_theta, final_phi;
  std::optional<double> best_validation_success;
  std::size_t best_episode = 0;
  std::size_t skipped_batches = 0;
  std::uint64_t version = 0;
};

TrainResult train(const model::PolicyModel& model, const env::TaskSet& train_tasks, const env::TaskSet* validation,
                  const env::EnvConfig& env_config, const TrainerConfig& cfg, ad::ParamVector theta,
                  ad::ParamVector phi, const TrainHooks& hooks = {});

}  // namespace savn::trainer
