#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "savn/autodiff/graph.hpp"
#include "savn/autodiff/var.hpp"

namespace savn::objectives {

using ad::Var;

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One environment step as seen by the losses. Graph fields depend on the
/// parameters that were active when the step was taken.
struct StepRecord {
  std::vector<double> obs;  // observation the action was chosen from
  Var hidden;               // LSTM h before the step
  Var pi;                   // acting distribution
  Var log_pi;               // its logs
  Var v;                    // scalar value estimate
  std::optional<Var> q;     // per-action success probabilities
  int action = 0;
  double reward = 0.0;
  bool action_failed = false;
};

struct TrajectoryRecord {
  std::vector<StepRecord> steps;
  std::vector<double> final_obs;  // observation after the last step
  bool success = false;
  bool truncated = false;         // ended by the step limit
  double bootstrap_value = 0.0;   // v of the final state, used when truncated
};

struct NavLossConfig {
  double gamma = 0.99;
  double value_weight = 0.5;
  double entropy_weight = 0.01;

  void validate() const;
};

/// Discounted returns R_t, seeded with `bootstrap` after the last reward.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma, double bootstrap);

/// Actor-critic loss summed over steps. The advantage R_t - v_t is a constant
/// in the policy term.
Var nav_loss(const TrajectoryRecord& traj, const NavLossConfig& cfg);

inline constexpr std::size_t kInteractionFilters = 10;

/// conv1.w [10, H+A, 1], conv1.b [10], conv2.w [1, 10, 1], conv2.b [1].
ad::ParamVector interaction_loss_layout(std::size_t hidden_dim, std::size_t num_actions);
ad::ParamVector init_interaction_loss(std::size_t hidden_dim, std::size_t num_actions, std::uint64_t seed);

/// The learned loss over a window of k (hidden state, policy) pairs: two
/// width-1 convolutions over time with a relu between, then the L2 norm of
/// the length-k output.
Var learned_interaction_loss(const std::map<std::string, Var>& phi, std::span<const Var> hidden,
                             std::span<const Var> policies, std::size_t k);

/// sum over i < j of g(s_i, s_j) * log pi_j[a_i], where g compares the view
/// part of the observations.
Var diversity_loss(std::span<const std::vector<double>> obs, std::span<const int> actions,
                   std::span<const Var> log_pis, int num_classes, double similarity_epsilon = 0.0);

/// sum over t of BCE(q_t[a_t], 1 - g(s_t, s_{t+1})); `obs` has one more entry
/// than `q`.
Var prediction_loss(std::span<const Var> q, std::span<const int> actions, std::span<const std::vector<double>> obs,
                    int num_classes, double similarity_epsilon = 0.0);

}  // namespace savn::objectives
