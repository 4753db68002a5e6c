#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "savn/autodiff/graph.hpp"
#include "savn/autodiff/var.hpp"
#include "savn/rng.hpp"

namespace savn::model {

using ad::Var;

struct NetworkConfig {
  std::size_t obs_dim = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t num_actions = 4;
  bool with_success_head = false;
  /// Attend over this many recent hidden states (0 disables the memory head).
  std::size_t memory_k = 0;

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

struct HiddenState {
  Var h;
  Var c;
};

struct PolicyOutput {
  Var logits;
  Var pi;
  Var log_pi;
  Var v;                 // scalar
  std::optional<Var> q;  // per-action success probability
  HiddenState next;
};

/// Graph views of every parameter slice for one value of theta.
struct BoundPolicy {
  Var flat;
  std::map<std::string, Var> slices;
  const Var& operator[](const std::string& name) const { return slices.at(name); }
};

/// Observation encoder -> fusion layer -> LSTM cell -> linear actor, critic,
/// and (optionally) success heads. With memory_k > 0 the heads read the LSTM
/// output concatenated with attention over the last memory_k hidden states.
class PolicyModel {
 public:
  explicit PolicyModel(NetworkConfig config);

  const NetworkConfig& config() const noexcept { return config_; }
  const ad::ParamVector& layout() const noexcept { return layout_; }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  ad::ParamVector init_params(std::uint64_t seed) const;

  BoundPolicy bind(const Var& flat_theta) const;
  HiddenState initial_state() const;

  /// `memory` holds earlier post-step hidden states, oldest first; only the
  /// newest memory_k - 1 are used together with the fresh one.
  PolicyOutput forward(const BoundPolicy& theta, std::span<const double> obs, const HiddenState& hidden,
                       std::span<const Var> memory = {}) const;

 private:
  NetworkConfig config_;
  ad::ParamVector layout_;
};

/// pi * q renormalized; falls back to pi when the product vanishes.
Var effective_policy(const Var& pi, const Var& q);
std::vector<double> effective_policy(std::span<const double> pi, std::span<const double> q);
/// log of effective_policy, written to stay finite.
Var effective_log_policy(const Var& log_pi, const Var& pi, const Var& q);

/// Inverse-CDF categorical draw from one uniform variate.
int sample_action(std::span<const double> probs, Rng& rng);

}  // namespace savn::model
