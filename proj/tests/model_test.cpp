#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "savn/model/checkpoint.hpp"
#include "savn/model/policy.hpp"
#include "support/finite_diff.hpp"
#include "support/policy_oracle.hpp"

using namespace savn;
using ad::Tensor;
using ad::Var;
using model::NetworkConfig;
using model::PolicyModel;

namespace {

std::vector<double> random_obs(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
  return v;
}

std::vector<double> random_params(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * scale;
  return v;
}

oracle::PlainDims dims_of(const NetworkConfig& c) {
  return {c.obs_dim, c.embed_dim, c.hidden_dim, c.num_actions, c.with_success_head, c.memory_k};
}

std::vector<double> values_of(const Var& v) { return {v.value().data().begin(), v.value().data().end()}; }

NetworkConfig small_config(bool success = false, std::size_t memory = 0) {
  NetworkConfig c;
  c.obs_dim = 7;
  c.embed_dim = 5;
  c.hidden_dim = 4;
  c.with_success_head = success;
  c.memory_k = memory;
  return c;
}

}  // namespace

TEST(Policy, InitIsDeterministic) {
  PolicyModel m(small_config(true));
  EXPECT_EQ(m.init_params(5), m.init_params(5));
  EXPECT_NE(m.init_params(5).values(), m.init_params(6).values());
}

TEST(Policy, BiasesStartAtZero) {
  PolicyModel m(small_config(true, 3));
  auto p = m.init_params(1);
  for (const auto& s : p.slices()) {
    if (s.shape.size() != 1) continue;
    for (double v : p.view(s.name)) EXPECT_EQ(v, 0.0) << s.name;
  }
}

TEST(Policy, WeightSpreadMatchesFanInScheme) {
  NetworkConfig c;
  c.obs_dim = 179;
  PolicyModel m(c);
  for (const auto& s : m.layout().slices()) {
    if (s.shape.size() != 2) continue;
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto p = m.init_params(seed);
      for (double v : p.view(s.name)) sum += v, sq += v * v, ++n;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    const double target = 1.0 / std::sqrt(3.0 * s.shape[1]);
    EXPECT_NEAR(sd / target, 1.0, 0.2) << s.name;
  }
}

TEST(Policy, ZeroParametersGiveUniformPolicyAndZeroValue) {
  PolicyModel m(small_config(true));
  ad::ParamVector theta = m.layout();
  auto bound = m.bind(Var::constant(theta.as_tensor()));
  Rng rng(2);
  auto out = m.forward(bound, random_obs(rng, 7), m.initial_state());
  for (double p : out.pi.value().data()) EXPECT_EQ(p, 0.25);
  EXPECT_EQ(out.v.item(), 0.0);
  for (double q : out.q->value().data()) EXPECT_EQ(q, 0.5);
}

TEST(Policy, MatchesPlainForwardPass) {
  Rng rng(17);
  for (bool success : {false, true}) {
    for (std::size_t memory : {0u, 1u, 3u}) {
      NetworkConfig c = small_config(success, memory);
      PolicyModel m(c);
      auto flat = random_params(rng, m.layout().size(), 0.8);
      oracle::PlainPolicy plain(dims_of(c), flat);
      auto bound = m.bind(Var::constant(Tensor::vector(flat)));
      auto state = m.initial_state();
      std::vector<double> h(c.hidden_dim, 0.0), cc(c.hidden_dim, 0.0);
      std::vector<Var> mem;
      std::vector<std::vector<double>> plain_mem;
      for (int t = 0; t < 6; ++t) {
        auto obs = random_obs(rng, c.obs_dim);
        auto out = m.forward(bound, obs, state, mem);
        auto ref = plain.step(obs, h, cc, plain_mem);
        EXPECT_LT(oracle::relative_error(values_of(out.pi), ref.pi), 1e-12);
        EXPECT_LT(oracle::relative_error(values_of(out.logits), ref.logits), 1e-12);
        EXPECT_NEAR(out.v.item(), ref.v, 1e-12);
        ASSERT_EQ(out.q.has_value(), success);
        if (success) EXPECT_LT(oracle::relative_error(values_of(*out.q), ref.q), 1e-12);
        state = out.next;
        h = ref.h;
        cc = ref.c;
        mem.push_back(out.next.h);
        plain_mem.push_back(ref.h);
      }
    }
  }
}

// Golden output of the default-size network. Regenerate with SAVN_WRITE_GOLDEN=1
// only when the network definition changes on purpose.
TEST(Policy, GoldenOutput) {
  NetworkConfig c;
  c.obs_dim = 179;
  c.with_success_head = true;
  PolicyModel m(c);
  auto theta = m.init_params(2024);
  Rng rng(99);
  auto obs1 = random_obs(rng, c.obs_dim);
  auto obs2 = random_obs(rng, c.obs_dim);
  auto bound = m.bind(Var::constant(theta.as_tensor()));
  auto first = m.forward(bound, obs1, m.initial_state());
  auto out = m.forward(bound, obs2, first.next);

  oracle::PlainPolicy plain(dims_of(c), theta.values());
  std::vector<double> zero(c.hidden_dim, 0.0);
  auto r1 = plain.step(obs1, zero, zero);
  auto r2 = plain.step(obs2, r1.h, r1.c);
  EXPECT_LT(oracle::relative_error(values_of(out.pi), r2.pi), 1e-12);

  const auto path = std::filesystem::path(SAVN_TEST_DATA_DIR) / "policy_golden.json";
  nlohmann::json now = {{"pi", values_of(out.pi)}, {"v", out.v.item()}, {"q", values_of(*out.q)}};
  if (std::getenv("SAVN_WRITE_GOLDEN")) {
    std::ofstream(path) << now.dump(2) << "\n";
    GTEST_SKIP() << "golden file written";
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing " << path;
  auto golden = nlohmann::json::parse(in);
  auto expect_close = [](const std::vector<double>& a, const std::vector<double>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  };
  expect_close(values_of(out.pi), golden["pi"].get<std::vector<double>>());
  expect_close(values_of(*out.q), golden["q"].get<std::vector<double>>());
  EXPECT_NEAR(out.v.item(), golden["v"].get<double>(), 1e-12);
}

TEST(Policy, PolicyIsNormalizedAndPositive) {
  Rng rng(4);
  PolicyModel m(small_config());
  for (int trial = 0; trial < 200; ++trial) {
    auto flat = random_params(rng, m.layout().size(), 3.0);
    auto out = m.forward(m.bind(Var::constant(Tensor::vector(flat))), random_obs(rng, 7), m.initial_state());
    double total = 0;
    for (double p : out.pi.value().data()) {
      EXPECT_GT(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Policy, ArgmaxInvariantUnderLogitShift) {
  Rng rng(8);
  PolicyModel m(small_config());
  const std::size_t offset = m.layout().slice("actor.b").offset;
  for (int trial = 0; trial < 50; ++trial) {
    auto flat = random_params(rng, m.layout().size(), 1.0);
    auto obs = random_obs(rng, 7);
    auto a = m.forward(m.bind(Var::constant(Tensor::vector(flat))), obs, m.initial_state());
    for (std::size_t i = 0; i < 4; ++i) flat[offset + i] += 3.7;
    auto b = m.forward(m.bind(Var::constant(Tensor::vector(flat))), obs, m.initial_state());
    auto pa = values_of(a.pi), pb = values_of(b.pi);
    EXPECT_EQ(std::max_element(pa.begin(), pa.end()) - pa.begin(), std::max_element(pb.begin(), pb.end()) - pb.begin());
  }
}

TEST(Policy, HiddenStateThreadingIsBitIdentical) {
  Rng rng(12);
  PolicyModel m(small_config(false, 3));
  auto flat = random_params(rng, m.layout().size(), 1.0);
  std::vector<std::vector<double>> obs;
  for (int t = 0; t < 8; ++t) obs.push_back(random_obs(rng, 7));

  auto run_all = [&] {
    auto bound = m.bind(Var::constant(Tensor::vector(flat)));
    auto state = m.initial_state();
    std::vector<Var> mem;
    std::vector<double> pis;
    for (const auto& o : obs) {
      auto out = m.forward(bound, o, state, mem);
      state = out.next;
      mem.push_back(state.h);
      for (double p : out.pi.value().data()) pis.push_back(p);
    }
    return pis;
  };
  // One step per call, carrying only plain values between calls.
  auto run_split = [&] {
    std::vector<double> pis;
    Tensor h({4}, 0.0), c({4}, 0.0);
    std::vector<Tensor> mem;
    for (const auto& o : obs) {
      auto bound = m.bind(Var::constant(Tensor::vector(flat)));
      std::vector<Var> mv;
      for (const auto& t : mem) mv.push_back(Var::constant(t));
      auto out = m.forward(bound, o, {Var::constant(h), Var::constant(c)}, mv);
      h = out.next.h.value();
      c = out.next.c.value();
      mem.push_back(h);
      for (double p : out.pi.value().data()) pis.push_back(p);
    }
    return pis;
  };
  EXPECT_EQ(run_all(), run_split());
}

TEST(Policy, LogPolicyGradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 12; ++trial) {
    NetworkConfig c = small_config(trial % 2 == 1, trial % 3 == 0 ? 3 : 0);
    PolicyModel m(c);
    auto flat = random_params(rng, m.layout().size(), 0.7);
    std::vector<std::vector<double>> obs{random_obs(rng, 7), random_obs(rng, 7), random_obs(rng, 7)};
    const std::size_t action = rng.below(4);
    // log pi of the last of three threaded steps.
    auto build = [&](const Var& theta) {
      auto bound = m.bind(theta);
      auto state = m.initial_state();
      std::vector<Var> mem;
      Var last;
      for (const auto& o : obs) {
        auto out = m.forward(bound, o, state, mem);
        state = out.next;
        mem.push_back(state.h);
        last = out.q ? model::effective_log_policy(out.log_pi, out.pi, *out.q) : out.log_pi;
      }
      return ad::index(last, action);
    };
    Var theta = Var::parameter(Tensor::vector(flat));
    auto analytic = values_of(ad::grad(build(theta), theta));
    auto numeric = oracle::central_difference(
        [&](const std::vector<double>& x) { return build(Var::constant(Tensor::vector(x))).item(); }, flat);
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Policy, ForwardRejectsWrongObservationLength) {
  PolicyModel m(small_config());
  auto theta = m.init_params(0);
  std::vector<double> obs(6, 0.0);
  EXPECT_THROW(m.forward(m.bind(Var::constant(theta.as_tensor())), obs, m.initial_state()), ad::ShapeError);
}

TEST(Policy, ConfigValidation) {
  NetworkConfig c;
  EXPECT_THROW(PolicyModel{c}, std::invalid_argument);
  c = small_config();
  c.hidden_dim = 0;
  EXPECT_THROW(PolicyModel{c}, std::invalid_argument);
}

TEST(EffectivePolicy, OnesLeavePolicyUnchanged) {
  std::vector<double> pi{0.1, 0.2, 0.3, 0.4}, q(4, 1.0);
  auto out = model::effective_policy(pi, q);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], pi[i], 1e-15);
}

TEST(EffectivePolicy, MaskingLimit) {
  std::vector<double> pi(4, 0.25), q{1.0 + 1e-9, 1e-9, 1e-9, 1e-9};
  auto out = model::effective_policy(pi, q);
  EXPECT_NEAR(out[0], 1.0, 1e-8);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(out[i], 0.0, 1e-8);
}

TEST(EffectivePolicy, MatchesProductThenNormalize) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pi(4), q(4);
    double z = 0;
    for (auto& p : pi) z += (p = rng.uniform() + 0.01);
    for (auto& p : pi) p /= z;
    for (auto& x : q) x = rng.uniform();
    double s = 0;
    for (int i = 0; i < 4; ++i) s += pi[i] * q[i];
    auto plain = model::effective_policy(pi, q);
    auto graph = model::effective_policy(Var::constant(Tensor::vector(pi)), Var::constant(Tensor::vector(q)));
    Var pv = Var::constant(Tensor::vector(pi));
    auto log_graph = model::effective_log_policy(ad::log(pv), pv, Var::constant(Tensor::vector(q)));
    for (int i = 0; i < 4; ++i) {
      const double expected = pi[i] * q[i] / s;
      EXPECT_NEAR(plain[i], expected, 1e-14);
      EXPECT_NEAR(graph.value()[i], expected, 1e-14);
      EXPECT_NEAR(log_graph.value()[i], std::log(expected), 1e-12);
    }
  }
}

TEST(EffectivePolicy, ZeroProductFallsBackToPolicy) {
  std::vector<double> pi{0.5, 0.5, 0.0, 0.0}, q{0.0, 0.0, 1.0, 1.0};
  EXPECT_EQ(model::effective_policy(pi, q), pi);
}

TEST(SampleAction, DegenerateDistribution) {
  Rng rng(1);
  std::vector<double> pi{1.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(model::sample_action(pi, rng), 0);
}

TEST(SampleAction, UniformFrequencies) {
  Rng rng(77);
  std::vector<double> pi(4, 0.25);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[model::sample_action(pi, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 0.25, 0.01);
}

TEST(SampleAction, Reproducible) {
  std::vector<double> pi{0.1, 0.4, 0.2, 0.3};
  Rng a(5), b(5);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(model::sample_action(pi, a), model::sample_action(pi, b));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  NetworkConfig c = small_config(true, 2);
  PolicyModel m(c);
  model::Checkpoint ck{c, m.init_params(3), {}, {{"episode", 42}}};
  Rng rng(6);
  ck.theta.values() = random_params(rng, ck.theta.size(), 1e300);
  ck.theta.values()[0] = -0.0;
  ck.theta.values()[1] = 5e-324;
  ck.phi.add_slice("conv1.w", {10, 8, 1});
  ck.phi.add_slice("conv1.b", {10});
  ck.phi.values() = random_params(rng, ck.phi.size(), 1.0);

  const auto path = std::filesystem::temp_directory_path() / "savn_ckpt_roundtrip.bin";
  model::save_checkpoint(path, ck);
  auto back = model::load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.network, c);
  EXPECT_EQ(back.extra, ck.extra);
  ASSERT_TRUE(back.theta.same_layout(ck.theta));
  ASSERT_TRUE(back.phi.same_layout(ck.phi));
  EXPECT_EQ(std::memcmp(back.theta.values().data(), ck.theta.values().data(), ck.theta.size() * sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(back.phi.values().data(), ck.phi.values().data(), ck.phi.size() * sizeof(double)), 0);
}

TEST(Checkpoint, RejectsCorruptInput) {
  NetworkConfig c = small_config();
  PolicyModel m(c);
  model::Checkpoint ck{c, m.init_params(3), {}, {}};
  std::string bytes = model::encode_checkpoint(ck);
  EXPECT_NO_THROW(model::decode_checkpoint(bytes));
  EXPECT_THROW(model::decode_checkpoint(bytes.substr(0, bytes.size() - 3)), model::CheckpointError);
  EXPECT_THROW(model::decode_checkpoint(bytes + "x"), model::CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(model::decode_checkpoint(bad_magic), model::CheckpointError);
  model::Checkpoint mismatched{small_config(true), m.init_params(3), {}, {}};
  EXPECT_THROW(model::decode_checkpoint(model::encode_checkpoint(mismatched)), model::CheckpointError);
}
