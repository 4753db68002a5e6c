#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"

using savn::cli::ConfigError;

namespace {

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
};

void add_override(CLI::App* cmd, std::vector<std::string>& overrides, const std::string& flag,
                  const std::string& path, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&overrides, path](const std::string& v) { overrides.push_back(path + "=" + v); }, help);
}

void add_switch(CLI::App* cmd, std::vector<std::string>& overrides, const std::string& flag, const std::string& path,
                const std::string& help) {
  cmd->add_flag_callback(flag, [&overrides, path] { overrides.push_back(path + "=true"); }, help);
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config, "JSON experiment config");
  cmd->add_option("--set", common.overrides, "override, e.g. trainer.alpha=0.01 (repeatable)");
  auto& o = common.overrides;
  add_override(cmd, o, "--seed", "seed", "experiment seed");
  add_override(cmd, o, "--output", "output_dir", "output directory (relative paths honour $SAVN_OUTPUT_ROOT)");
  add_override(cmd, o, "--alpha", "trainer.alpha", "interaction-gradient step size");
  add_override(cmd, o, "--beta1", "trainer.beta1", "Adam step size for policy parameters");
  add_override(cmd, o, "--beta2", "trainer.beta2", "Adam step size for loss parameters");
  add_override(cmd, o, "--k", "trainer.k", "steps between interaction-gradient updates");
  add_override(cmd, o, "--loss", "trainer.interaction", "interaction loss: learned, diversity, prediction, none");
  add_override(cmd, o, "--workers", "trainer.workers", "asynchronous training workers");
  add_override(cmd, o, "--episodes", "trainer.total_episodes", "training episodes");
  add_override(cmd, o, "--max-steps", "trainer.max_episode_steps", "episode step limit");
  add_override(cmd, o, "--validation-interval", "trainer.validation_interval", "episodes between validations");
  add_override(cmd, o, "--hidden", "network.hidden_dim", "LSTM width");
  add_override(cmd, o, "--embed", "network.embed_dim", "encoder width");
  add_override(cmd, o, "--memory-k", "network.memory_k", "attention memory length (0 disables)");
  add_override(cmd, o, "--eval-episodes", "eval.episodes", "evaluation episodes per model and seed");
  add_override(cmd, o, "--split", "eval.split", "split to evaluate on");
  add_override(cmd, o, "--threads", "eval.threads", "evaluation threads");
  add_switch(cmd, o, "--first-order", "trainer.first_order", "drop second-order terms from meta-gradients");
  add_switch(cmd, o, "--gt-object", "trainer.gt_object_termination", "environment ends the episode on success");
  add_switch(cmd, o, "--success-head", "network.with_success_head", "add the success-prediction head");
  add_switch(cmd, o, "--prediction-aux", "trainer.prediction_auxiliary",
             "add the prediction loss to the outer objective");
}

savn::cli::ExperimentConfig resolve(const Common& c) {
  std::optional<std::filesystem::path> file;
  if (c.config) file = *c.config;
  return savn::cli::load_config(file, c.overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-adaptive navigation agents in a procedural gridworld"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, diag_c, show_c;
  auto* gen = app.add_subcommand("generate", "write scene and task fixtures");
  add_common(gen, gen_c);

  auto* train = app.add_subcommand("train", "train a policy (and learned loss) on the train split");
  add_common(train, train_c);
  savn::cli::TrainOptions train_opts;
  std::optional<std::string> inner_updates;
  train->add_option("--run-name", train_opts.run_name, "run directory name under <output>/runs");
  train->add_option("--inner-updates", inner_updates, "max inner updates; a list (0,2,4) or range (0..4) sweeps");
  train->add_flag("-q,--quiet", train_opts.quiet, "no progress output");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints and baselines on a held-out split");
  add_common(ev, eval_c);
  savn::cli::EvalOptions eval_opts;
  std::vector<std::string> checkpoints;
  std::optional<std::size_t> eval_inner;
  ev->add_option("--checkpoint", checkpoints, "checkpoint file; repeat for several seeds or models");
  ev->add_option("--baseline", eval_opts.baselines, "random or nearest_neighbor (repeatable)");
  ev->add_option("--name", eval_opts.name, "report directory name under <output>/eval");
  ev->add_option("--inner-updates", eval_inner, "test-time cap on inner updates");
  ev->add_flag("--skip-no-adapt", eval_opts.skip_no_adapt, "do not also evaluate adaptive checkpoints without adaptation");

  auto* diag = app.add_subcommand("diagnose", "gradient alignment of the learned loss with the navigation loss");
  add_common(diag, diag_c);
  std::string diag_ckpt, diag_split = "train", diag_name = "diagnose";
  std::size_t diag_episodes = 100;
  diag->add_option("--checkpoint", diag_ckpt, "checkpoint with a learned loss")->required();
  diag->add_option("-n,--episodes-probed", diag_episodes, "episodes to probe");
  diag->add_option("--probe-split", diag_split, "split to draw tasks from");
  diag->add_option("--name", diag_name, "report name under <output>/diagnose");

  auto* show = app.add_subcommand("config", "print the resolved configuration");
  add_common(show, show_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return savn::cli::kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto manifest = savn::cli::cmd_generate(resolve(gen_c));
      for (const auto& [name, split] : manifest.at("splits").items()) {
        std::cout << name << ": " << split.at("scenes").size() << " scenes, " << split.at("tasks").at("count")
                  << " tasks\n";
      }
    } else if (train->parsed()) {
      if (inner_updates) train_opts.inner_updates = savn::cli::parse_count_list(*inner_updates);
      for (const auto& dir : savn::cli::cmd_train(resolve(train_c), train_opts)) std::cout << dir.string() << "\n";
    } else if (ev->parsed()) {
      eval_opts.checkpoints.assign(checkpoints.begin(), checkpoints.end());
      eval_opts.inner_updates = eval_inner;
      const auto rows = savn::cli::cmd_eval(resolve(eval_c), eval_opts);
      savn::eval::write_csv(std::cout, rows);
    } else if (diag->parsed()) {
      const auto report = savn::cli::cmd_diagnose(resolve(diag_c), diag_ckpt, diag_episodes, diag_split, diag_name);
      std::cout << "probes " << report.at("probes") << "  mean inner " << report.at("mean_inner") << "  mean cosine "
                << report.at("mean_cosine") << "\n";
    } else if (show->parsed()) {
      std::cout << savn::cli::config_to_json(resolve(show_c)).dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return savn::cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return savn::cli::kExitRuntime;
  }
  return savn::cli::kExitOk;
}
