#include "savn/objectives/losses.hpp"

#include <cmath>

#include "savn/env/gridworld.hpp"
#include "savn/rng.hpp"

namespace savn::objectives {

void NavLossConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw LossError("nav loss: gamma must be in (0, 1]");
  if (value_weight < 0.0 || entropy_weight < 0.0) throw LossError("nav loss: weights must be non-negative");
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma, double bootstrap) {
  std::vector<double> out(rewards.size());
  double running = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) out[t] = running = rewards[t] + gamma * running;
  return out;
}

Var nav_loss(const TrajectoryRecord& traj, const NavLossConfig& cfg) {
  cfg.validate();
  if (traj.steps.empty()) throw LossError("nav loss: empty trajectory");
  std::vector<double> rewards;
  for (const auto& s : traj.steps) rewards.push_back(s.reward);
  const auto returns = discounted_returns(rewards, cfg.gamma, traj.truncated ? traj.bootstrap_value : 0.0);

  std::vector<Var> terms;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    const double advantage = returns[t] - s.v.item();
    Var policy = ad::scale(ad::index(s.log_pi, static_cast<std::size_t>(s.action)), -advantage);
    Var err = ad::add_scalar(ad::neg(s.v), returns[t]);
    Var value = ad::scale(ad::mul(err, err), cfg.value_weight);
    Var entropy = ad::neg(ad::sum(ad::mul(s.pi, s.log_pi)));
    terms.push_back(ad::sub(ad::add(policy, value), ad::scale(entropy, cfg.entropy_weight)));
  }
  return ad::sum(ad::concat(terms));
}

ad::ParamVector interaction_loss_layout(std::size_t hidden_dim, std::size_t num_actions) {
  ad::ParamVector p;
  p.add_slice("conv1.w", {kInteractionFilters, hidden_dim + num_actions, 1});
  p.add_slice("conv1.b", {kInteractionFilters});
  p.add_slice("conv2.w", {1, kInteractionFilters, 1});
  p.add_slice("conv2.b", {1});
  return p;
}

ad::ParamVector init_interaction_loss(std::size_t hidden_dim, std::size_t num_actions, std::uint64_t seed) {
  ad::ParamVector p = interaction_loss_layout(hidden_dim, num_actions);
  Rng rng(mix_seed(seed, 0x1055));
  for (const auto& s : p.slices()) {
    if (s.shape.size() == 1) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.shape[1] * s.shape[2]));
    for (auto& v : p.view(s.name)) v = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return p;
}

Var learned_interaction_loss(const std::map<std::string, Var>& phi, std::span<const Var> hidden,
                             std::span<const Var> policies, std::size_t k) {
  if (k == 0) throw LossError("interaction loss: k must be at least 1");
  if (hidden.size() != k || policies.size() != k) {
    throw LossError("interaction loss: window has " + std::to_string(hidden.size()) + " states, expected " +
                    std::to_string(k));
  }
  std::vector<Var> columns;
  for (std::size_t t = 0; t < k; ++t) {
    columns.push_back(hidden[t]);
    columns.push_back(policies[t]);
  }
  const std::size_t channels = hidden[0].size() + policies[0].size();
  // rows are time steps; transpose to [channels, time]
  Var x = ad::transpose(ad::reshape(ad::concat(columns), {k, channels}));
  Var h1 = ad::relu(ad::add(ad::conv1d(x, phi.at("conv1.w")), ad::broadcast_cols(phi.at("conv1.b"), k)));
  Var out = ad::add(ad::conv1d(h1, phi.at("conv2.w")), ad::broadcast_cols(phi.at("conv2.b"), k));
  return ad::l2_norm(ad::reshape(out, {k}));
}

Var diversity_loss(std::span<const std::vector<double>> obs, std::span<const int> actions,
                   std::span<const Var> log_pis, int num_classes, double similarity_epsilon) {
  const std::size_t k = obs.size();
  if (actions.size() != k || log_pis.size() != k) throw LossError("diversity loss: window lengths differ");
  std::vector<Var> terms;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const int g = env::similarity_g(env::view_part(obs[i], num_classes), env::view_part(obs[j], num_classes),
                                      similarity_epsilon);
      if (g) terms.push_back(ad::index(log_pis[j], static_cast<std::size_t>(actions[i])));
    }
  }
  if (terms.empty()) {
    // keep the result attached to the graph so callers can differentiate it
    return k == 0 ? Var::scalar(0.0) : ad::scale(ad::index(log_pis[0], 0), 0.0);
  }
  return ad::sum(ad::concat(terms));
}

Var prediction_loss(std::span<const Var> q, std::span<const int> actions, std::span<const std::vector<double>> obs,
                    int num_classes, double similarity_epsilon) {
  if (q.empty()) throw LossError("prediction loss: no success predictions (success head absent?)");
  if (actions.size() != q.size() || obs.size() != q.size() + 1) {
    throw LossError("prediction loss: expected k predictions, k actions and k + 1 observations");
  }
  std::vector<Var> terms;
  for (std::size_t t = 0; t < q.size(); ++t) {
    const int g = env::similarity_g(env::view_part(obs[t], num_classes), env::view_part(obs[t + 1], num_classes),
                                    similarity_epsilon);
    terms.push_back(ad::binary_cross_entropy(ad::index(q[t], static_cast<std::size_t>(actions[t])), 1.0 - g));
  }
  return ad::sum(ad::concat(terms));
}

}  // namespace savn::objectives
