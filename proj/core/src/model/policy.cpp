#include "savn/model/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace savn::model {

void NetworkConfig::validate() const {
  if (obs_dim < 1 || embed_dim < 1 || hidden_dim < 1 || num_actions < 1) {
    throw std::invalid_argument("network config: all dimensions must be at least 1");
  }
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"obs_dim", c.obs_dim},
       {"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim},
       {"num_actions", c.num_actions},
       {"with_success_head", c.with_success_head},
       {"memory_k", c.memory_k}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c.obs_dim = j.at("obs_dim").get<std::size_t>();
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_actions = j.value("num_actions", c.num_actions);
  c.with_success_head = j.value("with_success_head", c.with_success_head);
  c.memory_k = j.value("memory_k", c.memory_k);
}

PolicyModel::PolicyModel(NetworkConfig config) : config_(config) {
  config_.validate();
  const std::size_t E = config_.embed_dim, H = config_.hidden_dim, A = config_.num_actions;
  const std::size_t D = config_.memory_k > 0 ? 2 * H : H;
  layout_.add_slice("encoder.w", {E, config_.obs_dim});
  layout_.add_slice("encoder.b", {E});
  layout_.add_slice("fusion.w", {E, E});
  layout_.add_slice("fusion.b", {E});
  layout_.add_slice("lstm.w_ih", {4 * H, E});
  layout_.add_slice("lstm.w_hh", {4 * H, H});
  layout_.add_slice("lstm.b", {4 * H});
  if (config_.memory_k > 0) layout_.add_slice("memory.query", {H, H});
  layout_.add_slice("actor.w", {A, D});
  layout_.add_slice("actor.b", {A});
  layout_.add_slice("critic.w", {1, D});
  layout_.add_slice("critic.b", {1});
  if (config_.with_success_head) {
    layout_.add_slice("success.w", {A, D});
    layout_.add_slice("success.b", {A});
  }
}

ad::ParamVector PolicyModel::init_params(std::uint64_t seed) const {
  ad::ParamVector p = layout_;
  Rng rng(mix_seed(seed, 0x9011c7));
  for (const auto& s : p.slices()) {
    auto view = p.view(s.name);
    if (s.shape.size() == 1) {
      std::fill(view.begin(), view.end(), 0.0);
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.shape.back()));
    for (auto& v : view) v = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return p;
}

BoundPolicy PolicyModel::bind(const Var& flat_theta) const { return {flat_theta, layout_.bind(flat_theta)}; }

HiddenState PolicyModel::initial_state() const {
  return {Var::constant(ad::Tensor({config_.hidden_dim}, 0.0)), Var::constant(ad::Tensor({config_.hidden_dim}, 0.0))};
}

PolicyOutput PolicyModel::forward(const BoundPolicy& theta, std::span<const double> obs, const HiddenState& hidden,
                                  std::span<const Var> memory) const {
  if (obs.size() != config_.obs_dim) {
    throw ad::ShapeError("policy: observation has " + std::to_string(obs.size()) + " entries, expected " +
                         std::to_string(config_.obs_dim));
  }
  Var x = Var::constant(ad::Tensor::vector(std::vector<double>(obs.begin(), obs.end())));
  Var embed = ad::relu(ad::linear(theta["encoder.w"], theta["encoder.b"], x));
  Var fused = ad::relu(ad::linear(theta["fusion.w"], theta["fusion.b"], embed));
  ad::LstmState next = ad::lstm_cell(fused, {hidden.h, hidden.c}, theta["lstm.w_ih"], theta["lstm.w_hh"], theta["lstm.b"]);

  Var features = next.h;
  if (config_.memory_k > 0) {
    const std::size_t H = config_.hidden_dim;
    const std::size_t take = std::min(memory.size(), config_.memory_k - 1);
    std::vector<Var> rows(memory.end() - static_cast<std::ptrdiff_t>(take), memory.end());
    rows.push_back(next.h);
    Var keys = ad::reshape(ad::concat(rows), {rows.size(), H});
    Var query = ad::matmul(theta["memory.query"], next.h);
    Var weights = ad::softmax(ad::scale(ad::matmul(keys, query), 1.0 / std::sqrt(static_cast<double>(H))));
    Var context = ad::matmul(ad::transpose(keys), weights);
    std::vector<Var> parts{next.h, context};
    features = ad::concat(parts);
  }

  PolicyOutput out;
  out.logits = ad::linear(theta["actor.w"], theta["actor.b"], features);
  out.pi = ad::softmax(out.logits);
  out.log_pi = ad::log_softmax(out.logits);
  out.v = ad::reshape(ad::linear(theta["critic.w"], theta["critic.b"], features), {});
  if (config_.with_success_head) out.q = ad::sigmoid(ad::linear(theta["success.w"], theta["success.b"], features));
  out.next = {next.h, next.c};
  return out;
}

Var effective_policy(const Var& pi, const Var& q) {
  Var prod = ad::mul(pi, q);
  Var total = ad::sum(prod);
  if (total.item() == 0.0) return pi;
  return ad::mul(prod, ad::expand(ad::reciprocal(total), prod.shape()));
}

std::vector<double> effective_policy(std::span<const double> pi, std::span<const double> q) {
  if (pi.size() != q.size()) throw std::invalid_argument("effective_policy: length mismatch");
  std::vector<double> out(pi.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) total += out[i] = pi[i] * q[i];
  if (total == 0.0) return {pi.begin(), pi.end()};
  for (auto& v : out) v /= total;
  return out;
}

Var effective_log_policy(const Var& log_pi, const Var& pi, const Var& q) {
  Var total = ad::sum(ad::mul(pi, q));
  if (total.item() == 0.0) return log_pi;
  Var log_q = ad::log(ad::clamp(q, 1e-300, 1.0));
  return ad::sub(ad::add(log_pi, log_q), ad::expand(ad::log(total), log_pi.shape()));
}

int sample_action(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = static_cast<int>(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  return last_positive;
}

}  // namespace savn::model
