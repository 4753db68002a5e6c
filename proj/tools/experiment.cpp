#include "experiment.hpp"

#include <unistd.h>

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "savn/model/checkpoint.hpp"
#include "savn/trainer/agents.hpp"

namespace savn::cli {

using nlohmann::json;

namespace {

constexpr const char* kSplits[] = {"train", "val", "test"};

json env_to_json(const env::EnvConfig& e) {
  return {{"window", e.window},
          {"success_distance", e.success_distance},
          {"fov_degrees", e.fov_degrees},
          {"similarity_epsilon", e.similarity_epsilon},
          {"step_reward", e.step_reward},
          {"success_reward", e.success_reward}};
}

void env_from_json(const json& j, env::EnvConfig& e) {
  j.at("window").get_to(e.window);
  j.at("success_distance").get_to(e.success_distance);
  j.at("fov_degrees").get_to(e.fov_degrees);
  j.at("similarity_epsilon").get_to(e.similarity_epsilon);
  j.at("step_reward").get_to(e.step_reward);
  j.at("success_reward").get_to(e.success_reward);
}

json scenes_to_json(const env::SceneConfig& s) {
  return {{"width", s.width},
          {"height", s.height},
          {"wall_density", s.wall_density},
          {"object_classes", s.object_classes},
          {"min_instances", s.min_instances}};
}

void scenes_from_json(const json& j, env::SceneConfig& s) {
  j.at("width").get_to(s.width);
  j.at("height").get_to(s.height);
  j.at("wall_density").get_to(s.wall_density);
  j.at("object_classes").get_to(s.object_classes);
  j.at("min_instances").get_to(s.min_instances);
}

json split_to_json(const SplitSpec& s) {
  return {{"first_seed", s.first_seed}, {"scenes", s.scenes}, {"episodes_per_scene", s.episodes_per_scene}};
}

void split_from_json(const json& j, SplitSpec& s) {
  j.at("first_seed").get_to(s.first_seed);
  j.at("scenes").get_to(s.scenes);
  j.at("episodes_per_scene").get_to(s.episodes_per_scene);
}

void check_keys(const json& given, const json& reference, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + prefix + key + "'");
    if (reference[key].is_object()) check_keys(value, reference[key], prefix + key + ".");
  }
}

/// Everything fixture contents depend on.
json fixture_config(const ExperimentConfig& cfg) {
  return {{"env", env_to_json(cfg.env)},
          {"scenes", scenes_to_json(cfg.scenes)},
          {"targets", cfg.targets},
          {"train", split_to_json(cfg.train)},
          {"val", split_to_json(cfg.val)},
          {"test", split_to_json(cfg.test)}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path fixtures_dir(const ExperimentConfig& cfg) { return cfg.output_root() / "fixtures"; }

template <class F>
auto as_config_error(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

model::Checkpoint load_compatible(const ExperimentConfig& cfg, const fs::path& path) {
  auto ck = model::load_checkpoint(path);
  const auto expected = cfg.resolved_network().obs_dim;
  if (ck.network.obs_dim != expected) {
    throw ConfigError(path.string() + ": checkpoint expects observations of size " +
                      std::to_string(ck.network.obs_dim) + " but the configured environment produces " +
                      std::to_string(expected));
  }
  return ck;
}

/// Trainer settings a checkpoint was trained with, with this experiment's
/// episode limit and termination mode.
trainer::TrainerConfig checkpoint_trainer(const ExperimentConfig& cfg, const model::Checkpoint& ck) {
  auto t = cfg.resolved_trainer();
  if (ck.extra.contains("trainer")) {
    t = as_config_error("checkpoint trainer settings", [&] { return ck.extra.at("trainer").get<trainer::TrainerConfig>(); });
  }
  t.max_episode_steps = cfg.trainer.max_episode_steps;
  t.gt_object_termination = cfg.trainer.gt_object_termination;
  t.seed = cfg.seed;
  return t;
}

json checkpoint_extra(const std::string& agent, const ExperimentConfig& cfg, const trainer::TrainerConfig& t,
                      const std::string& kind, std::size_t episode, std::optional<double> validation) {
  return {{"agent", agent},
          {"seed", cfg.seed},
          {"trainer", t},
          {"kind", kind},
          {"episode", episode},
          {"validation_success", validation ? json(*validation) : json(nullptr)}};
}

}  // namespace

// ---- configuration ----

void ExperimentConfig::validate() const {
  as_config_error("invalid configuration", [&] {
    resolved_network().validate();
    resolved_trainer().validate();
    if (env.window < 1 || env.window % 2 == 0) throw ConfigError("env.window must be a positive odd number");
    if (scenes.object_classes < 1) throw ConfigError("scenes.object_classes must be at least 1");
    for (int t : targets) {
      if (t < 0 || t >= scenes.object_classes) throw ConfigError("target class out of range: " + std::to_string(t));
    }
    if (train.scenes == 0 || train.episodes_per_scene < 1) throw ConfigError("train split must have scenes and episodes");
    for (const auto* name : kSplits) {
      const auto& s = split(name);
      if (s.scenes > 0 && s.episodes_per_scene < 1) {
        throw ConfigError(std::string(name) + ".episodes_per_scene must be at least 1");
      }
    }
    const auto tr = env::seed_range(train.first_seed, train.scenes);
    const auto va = env::seed_range(val.first_seed, val.scenes);
    const auto te = env::seed_range(test.first_seed, test.scenes);
    env::require_disjoint(tr, va);
    env::require_disjoint(tr, te);
    env::require_disjoint(va, te);
    if (trainer.validation_interval > 0 && val.scenes == 0) {
      throw ConfigError("trainer.validation_interval is set but the val split is empty");
    }
    if (eval.buckets < 1) throw ConfigError("eval.buckets must be at least 1");
    if (eval.threads < 1) throw ConfigError("eval.threads must be at least 1");
    split(eval.split);
  });
}

fs::path ExperimentConfig::output_root() const {
  fs::path out(output_dir);
  if (out.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / out;
  }
  return out;
}

model::NetworkConfig ExperimentConfig::resolved_network() const {
  auto n = network;
  n.obs_dim = env::observation_size(env, scenes.object_classes);
  n.num_actions = env::kNumActions;
  return n;
}

env::EnvConfig ExperimentConfig::resolved_env() const { return trainer.apply_to(env); }

trainer::TrainerConfig ExperimentConfig::resolved_trainer() const {
  auto t = trainer;
  t.seed = seed;
  return t;
}

const SplitSpec& ExperimentConfig::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train, val, or test)");
}

json config_to_json(const ExperimentConfig& c) {
  json trainer = c.trainer;
  trainer.erase("seed");
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"env", env_to_json(c.env)},
          {"scenes", scenes_to_json(c.scenes)},
          {"targets", c.targets},
          {"train", split_to_json(c.train)},
          {"val", split_to_json(c.val)},
          {"test", split_to_json(c.test)},
          {"network",
           {{"embed_dim", c.network.embed_dim},
            {"hidden_dim", c.network.hidden_dim},
            {"with_success_head", c.network.with_success_head},
            {"memory_k", c.network.memory_k}}},
          {"trainer", trainer},
          {"eval",
           {{"episodes", c.eval.episodes},
            {"buckets", c.eval.buckets},
            {"threads", c.eval.threads},
            {"split", c.eval.split}}}};
}

ExperimentConfig config_from_json(const json& given) {
  const json reference = config_to_json(ExperimentConfig{});
  check_keys(given, reference, "");
  json j = reference;
  j.merge_patch(given);
  ExperimentConfig c;
  as_config_error("invalid configuration value", [&] {
    j.at("seed").get_to(c.seed);
    j.at("output_dir").get_to(c.output_dir);
    env_from_json(j.at("env"), c.env);
    scenes_from_json(j.at("scenes"), c.scenes);
    j.at("targets").get_to(c.targets);
    split_from_json(j.at("train"), c.train);
    split_from_json(j.at("val"), c.val);
    split_from_json(j.at("test"), c.test);
    const auto& n = j.at("network");
    n.at("embed_dim").get_to(c.network.embed_dim);
    n.at("hidden_dim").get_to(c.network.hidden_dim);
    n.at("with_success_head").get_to(c.network.with_success_head);
    n.at("memory_k").get_to(c.network.memory_k);
    c.trainer = j.at("trainer").get<trainer::TrainerConfig>();
    const auto& e = j.at("eval");
    e.at("episodes").get_to(c.eval.episodes);
    e.at("buckets").get_to(c.eval.buckets);
    e.at("threads").get_to(c.eval.threads);
    e.at("split").get_to(c.eval.split);
    return 0;
  });
  c.trainer.seed = c.seed;
  c.validate();
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError("override path crosses a non-object value: " + path);
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file) {
    std::string text;
    try {
      text = read_text(*file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + file->string());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

void write_metadata(const fs::path& path, const std::string& command, const json& extra) {
  char host[256] = {};
  gethostname(host, sizeof host - 1);
  json meta = {{"command", command}, {"written_at", utc_now()}, {"host", host}, {"version", SAVN_VERSION}};
  if (extra.is_object()) meta.update(extra);
  write_text(path, pretty(meta));
}

std::vector<std::size_t> parse_count_list(const std::string& text) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty() || s[0] == '-') throw ConfigError("bad count '" + s + "' in '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots)), hi = number(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty range: " + text);
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(number(item));
  if (out.empty()) throw ConfigError("empty count list");
  return out;
}

// ---- generate ----

json cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto root = fixtures_dir(cfg);
  const auto env_cfg = cfg.resolved_env();
  const json fixture_cfg = fixture_config(cfg);
  json manifest = {{"config_hash", sha256_hex(fixture_cfg.dump())}, {"config", fixture_cfg}, {"splits", json::object()}};
  for (const auto* name : kSplits) {
    const auto& spec = cfg.split(name);
    const auto dir = root / name;
    fs::remove_all(dir);
    json entry = {{"seeds", json::array()}, {"scenes", json::array()}};
    if (spec.scenes > 0) {
      const auto seeds = env::seed_range(spec.first_seed, spec.scenes);
      auto ts = as_config_error(std::string("cannot generate the ") + name + " split", [&] {
        return env::make_task_set(seeds, cfg.scenes, cfg.targets, spec.episodes_per_scene, spec.first_seed, env_cfg);
      });
      for (const auto& scene : ts.scenes) {
        const std::string file = std::string(name) + "/scene_" + std::to_string(scene.seed()) + ".json";
        const std::string text = pretty(env::scene_to_json(scene));
        write_text(root / file, text);
        entry["seeds"].push_back(scene.seed());
        entry["scenes"].push_back({{"seed", scene.seed()}, {"file", file}, {"sha256", sha256_hex(text)}});
      }
      json tasks = json::array();
      for (const auto& t : ts.tasks) tasks.push_back(env::task_to_json(t));
      const std::string file = std::string(name) + "/tasks.json";
      const std::string text = pretty(tasks);
      write_text(root / file, text);
      entry["tasks"] = {{"file", file}, {"sha256", sha256_hex(text)}, {"count", ts.tasks.size()}};
    } else {
      entry["tasks"] = {{"file", nullptr}, {"sha256", nullptr}, {"count", 0}};
    }
    manifest["splits"][name] = entry;
  }
  write_text(root / "manifest.json", pretty(manifest));
  write_metadata(root / "metadata.json", "generate");
  return manifest;
}

const env::TaskSet& Fixtures::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

Fixtures load_fixtures(const ExperimentConfig& cfg) {
  const auto root = fixtures_dir(cfg);
  if (!fs::exists(root / "manifest.json")) {
    throw std::runtime_error("no fixtures under " + root.string() + "; run `savn generate` with this config first");
  }
  const json manifest = json::parse(read_text(root / "manifest.json"));
  if (manifest.at("config_hash") != sha256_hex(fixture_config(cfg).dump())) {
    throw ConfigError("fixtures under " + root.string() +
                      " were generated with a different environment or split configuration; rerun `savn generate`");
  }
  auto checked = [&](const json& entry) {
    const std::string text = read_text(root / entry.at("file").get<std::string>());
    if (sha256_hex(text) != entry.at("sha256").get<std::string>()) {
      throw std::runtime_error("fixture file changed since generation: " + entry.at("file").get<std::string>());
    }
    return json::parse(text);
  };
  Fixtures fx;
  for (const auto* name : kSplits) {
    const auto& entry = manifest.at("splits").at(name);
    env::TaskSet& ts = name == std::string("train") ? fx.train : name == std::string("val") ? fx.val : fx.test;
    for (const auto& s : entry.at("scenes")) ts.scenes.push_back(env::scene_from_json(checked(s)));
    if (entry.at("tasks").at("count").get<std::size_t>() > 0) {
      for (const auto& t : checked(entry.at("tasks"))) ts.tasks.push_back(env::task_from_json(t));
    }
  }
  return fx;
}

// ---- train ----

namespace {

fs::path train_one(const ExperimentConfig& cfg, const Fixtures& fx, const trainer::TrainerConfig& tcfg,
                   const fs::path& dir, bool quiet) {
  const auto net = cfg.resolved_network();
  const auto env_cfg = cfg.resolved_env();
  const auto tag = trainer::agent_tag(tcfg, net);
  fs::create_directories(dir / "checkpoints");
  for (const auto& old : fs::directory_iterator(dir / "checkpoints")) fs::remove(old.path());

  ExperimentConfig resolved = cfg;
  resolved.trainer = tcfg;
  write_text(dir / "config.json", pretty(config_to_json(resolved)));
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());

  model::PolicyModel model(net);
  auto theta0 = model.init_params(cfg.seed);
  auto phi0 = trainer::init_loss_params(tcfg, net, mix_seed(cfg.seed, 1));

  std::size_t seen = 0, recent_success = 0;
  trainer::TrainHooks hooks;
  hooks.log = [&](const json& record) {
    log << record.dump() << "\n";
    if (record.at("type") != "episode") return;
    ++seen;
    recent_success += record.at("success").get<bool>() ? 1 : 0;
    if (!quiet && seen % 500 == 0) {
      std::cerr << tag << " episode " << seen << "/" << tcfg.total_episodes << "  success(last 500) "
                << static_cast<double>(recent_success) / 500.0 << "\n";
      recent_success = 0;
    }
  };
  hooks.checkpoint = [&](std::size_t episode, const ad::ParamVector& theta, const ad::ParamVector& phi,
                         double success, bool best) {
    model::save_checkpoint(dir / "checkpoints" / ("validation_" + std::to_string(episode) + ".ckpt"),
                           {net, theta, phi, checkpoint_extra(tag, cfg, tcfg, "validation", episode, success)});
    if (!quiet) {
      std::cerr << tag << " validation at episode " << episode << ": success " << success << (best ? " (best)" : "")
                << "\n";
    }
  };

  const env::TaskSet* validation = tcfg.validation_interval > 0 ? &fx.val : nullptr;
  auto result = trainer::train(model, fx.train, validation, env_cfg, tcfg, theta0, phi0, hooks);
  log.close();

  model::save_checkpoint(dir / "best.ckpt", {net, result.theta, result.phi,
                                             checkpoint_extra(tag, cfg, tcfg, "best", result.best_episode,
                                                              result.best_validation_success)});
  model::save_checkpoint(dir / "final.ckpt", {net, result.final_theta, result.final_phi,
                                              checkpoint_extra(tag, cfg, tcfg, "final", tcfg.total_episodes,
                                                               std::nullopt)});
  json summary = {{"agent", tag},
                  {"seed", cfg.seed},
                  {"episodes", tcfg.total_episodes},
                  {"max_inner_updates", tcfg.max_inner_updates},
                  {"best_episode", result.best_episode},
                  {"best_validation_success",
                   result.best_validation_success ? json(*result.best_validation_success) : json(nullptr)},
                  {"skipped_batches", result.skipped_batches},
                  {"updates", result.version}};
  write_text(dir / "summary.json", pretty(summary));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_metadata(dir / "metadata.json", "train", {{"started_at", started}, {"wall_seconds", seconds}});
  return dir;
}

}  // namespace

std::vector<fs::path> cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const auto fx = load_fixtures(cfg);
  auto tcfg = cfg.resolved_trainer();
  const auto net = cfg.resolved_network();
  as_config_error("trainer and network do not fit", [&] {
    trainer::check_compatible(tcfg, net);
    return 0;
  });
  if (tcfg.validation_interval > 0 && fx.val.tasks.empty()) throw ConfigError("validation requested but no val tasks");

  std::vector<std::size_t> sweep = opts.inner_updates;
  if (sweep.empty()) sweep.push_back(tcfg.max_inner_updates);
  const std::string base =
      opts.run_name.empty() ? trainer::agent_tag(tcfg, net) + "_seed" + std::to_string(cfg.seed) : opts.run_name;
  std::vector<fs::path> dirs;
  for (std::size_t n : sweep) {
    auto run_cfg = tcfg;
    run_cfg.max_inner_updates = n;
    as_config_error("invalid inner-update count", [&] {
      run_cfg.validate();
      return 0;
    });
    fs::path dir = cfg.output_root() / "runs" / base;
    if (opts.inner_updates.size() > 1) dir /= "inner_updates_" + std::to_string(n);
    dirs.push_back(train_one(cfg, fx, run_cfg, dir, opts.quiet));
  }
  return dirs;
}

// ---- eval ----

std::vector<eval::ComparisonRow> cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts) {
  cfg.validate();
  const auto fx = load_fixtures(cfg);
  const auto& tasks = fx.split(cfg.eval.split);
  if (tasks.tasks.empty()) throw ConfigError("the " + cfg.eval.split + " split has no tasks");
  const auto env_cfg = cfg.resolved_env();

  struct Entry {
    std::string model;
    std::vector<std::unique_ptr<trainer::Agent>> seeds;
    std::vector<std::string> sources;
  };
  std::vector<Entry> entries;
  auto add = [&](const std::string& model, std::unique_ptr<trainer::Agent> agent, const std::string& source) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.model == model; });
    if (it == entries.end()) {
      entries.push_back({model, {}, {}});
      it = std::prev(entries.end());
    }
    it->seeds.push_back(std::move(agent));
    it->sources.push_back(source);
  };

  for (const auto& path : opts.checkpoints) {
    const auto ck = load_compatible(cfg, path);
    auto tcfg = checkpoint_trainer(cfg, ck);
    if (opts.inner_updates) tcfg.max_inner_updates = *opts.inner_updates;
    const auto tag = trainer::agent_tag(tcfg, ck.network);
    const bool adaptive = tcfg.alpha > 0.0 && tcfg.interaction != trainer::InteractionKind::None;
    as_config_error(path.string() + ": incompatible checkpoint", [&] {
      add(tag, std::make_unique<trainer::PolicyAgent>(model::PolicyModel(ck.network), ck.theta, ck.phi, tcfg, true),
          path.string());
      if (adaptive && !opts.skip_no_adapt) {
        add(tag + "_no_adapt",
            std::make_unique<trainer::PolicyAgent>(model::PolicyModel(ck.network), ck.theta, ck.phi, tcfg, false),
            path.string());
      }
      return 0;
    });
  }
  std::shared_ptr<const trainer::NearestNeighborIndex> nn_index;
  for (const auto& b : opts.baselines) {
    if (b == "random") {
      add("random", std::make_unique<trainer::RandomAgent>(env_cfg.max_episode_steps), "random");
    } else if (b == "nearest_neighbor") {
      if (!nn_index) {
        nn_index = std::make_shared<const trainer::NearestNeighborIndex>(
            trainer::NearestNeighborIndex::build(fx.train.scenes, env_cfg));
      }
      add("nearest_neighbor", std::make_unique<trainer::NearestNeighborAgent>(nn_index, env_cfg.max_episode_steps),
          "nearest_neighbor");
    } else {
      throw ConfigError("unknown baseline '" + b + "' (expected random or nearest_neighbor)");
    }
  }
  if (entries.empty()) throw ConfigError("nothing to evaluate: pass --checkpoint or --baseline");

  const std::size_t n = std::min(cfg.eval.episodes, tasks.tasks.size());
  std::vector<eval::ModelResults> models;
  json reports = json::object();
  std::string curves = "model,bucket,ratio,actions\n";
  std::string episodes;
  for (const auto& e : entries) {
    eval::ModelResults mr{e.model, {}};
    json per_seed = json::array();
    std::vector<eval::EpisodeResult> pooled;
    for (std::size_t s = 0; s < e.seeds.size(); ++s) {
      auto results = trainer::evaluate_agent(*e.seeds[s], tasks, env_cfg, cfg.seed, n, cfg.eval.threads);
      per_seed.push_back(eval::summarize(results, cfg.eval.buckets));
      for (const auto& r : results) {
        json line = r;
        line["model"] = e.model;
        line["seed_index"] = s;
        episodes += line.dump() + "\n";
      }
      pooled.insert(pooled.end(), results.begin(), results.end());
      mr.per_seed.push_back(std::move(results));
    }
    const auto pooled_report = eval::summarize(pooled, cfg.eval.buckets);
    reports[e.model] = {{"sources", e.sources}, {"per_seed", per_seed}, {"pooled", pooled_report}};
    for (std::size_t b = 0; b < pooled_report.failed_curve.ratio.size(); ++b) {
      std::ostringstream row;
      row.precision(17);
      row << e.model << "," << b << "," << pooled_report.failed_curve.ratio[b] << ","
          << pooled_report.failed_curve.actions[b] << "\n";
      curves += row.str();
    }
    models.push_back(std::move(mr));
  }
  const auto rows = eval::compare(models, cfg.eval.split);

  const auto dir = cfg.output_root() / "eval" / opts.name;
  std::ostringstream csv;
  eval::write_csv(csv, rows);
  write_text(dir / "comparison.csv", csv.str());
  write_text(dir / "comparison.json", pretty(eval::rows_to_json(rows)));
  write_text(dir / "reports.json", pretty(reports));
  write_text(dir / "failed_curves.csv", curves);
  write_text(dir / "episodes.jsonl", episodes);
  write_metadata(dir / "metadata.json", "eval", {{"episodes_per_seed", n}});
  return rows;
}

// ---- diagnose ----

json cmd_diagnose(const ExperimentConfig& cfg, const fs::path& checkpoint, std::size_t episodes,
                  const std::string& split, const std::string& name) {
  cfg.validate();
  const auto ck = load_compatible(cfg, checkpoint);
  if (ck.phi.size() == 0) {
    throw ConfigError(checkpoint.string() + ": gradient diagnostics need a checkpoint with a learned interaction loss");
  }
  auto tcfg = checkpoint_trainer(cfg, ck);
  tcfg.interaction = trainer::InteractionKind::Learned;
  json report = {{"checkpoint", checkpoint.string()}, {"split", split}, {"episodes", episodes}};
  json per_episode = json::array();
  double inner_sum = 0.0, cosine_sum = 0.0;
  std::size_t probes = 0, cosines = 0;
  if (episodes > 0) {
    const auto fx = load_fixtures(cfg);
    const auto& tasks = fx.split(split);
    if (tasks.tasks.empty()) throw ConfigError("the " + split + " split has no tasks");
    const model::PolicyModel model(ck.network);
    const auto env_cfg = cfg.resolved_env();
    for (std::size_t i = 0; i < episodes; ++i) {
      Rng rng(mix_seed(cfg.seed, i));
      const std::size_t task = i % tasks.tasks.size();
      const auto d = trainer::grad_similarity_diagnostic(model, ck.theta, ck.phi, tasks, task, env_cfg, tcfg, rng);
      json row = {{"task_index", task}, {"inner", nullptr}, {"cosine", nullptr}};
      if (d) {
        ++probes;
        inner_sum += d->inner;
        row["inner"] = d->inner;
        if (d->cosine) {
          ++cosines;
          cosine_sum += *d->cosine;
          row["cosine"] = *d->cosine;
        }
      }
      per_episode.push_back(row);
    }
  }
  report["probes"] = probes;
  report["mean_inner"] = probes ? json(inner_sum / static_cast<double>(probes)) : json(nullptr);
  report["cosine_count"] = cosines;
  report["mean_cosine"] = cosines ? json(cosine_sum / static_cast<double>(cosines)) : json(nullptr);
  report["per_episode"] = per_episode;
  const auto dir = cfg.output_root() / "diagnose";
  write_text(dir / (name + ".json"), pretty(report));
  write_metadata(dir / (name + ".metadata.json"), "diagnose");
  return report;
}

}  // namespace savn::cli
