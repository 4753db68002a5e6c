// Scaled-down comparison of the adaptive agent against the non-adaptive
// baseline on unseen scenes, plus the inner-update-count ablation.
//
// For each training seed: train A3C and SAVN (learned loss) on the train
// split, pick the best-on-validation checkpoints, evaluate both on the test
// split, then re-evaluate the SAVN checkpoints with 0..4 allowed test-time
// inner updates. Results go to a JSON file and a short markdown table.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "experiment.hpp"

using namespace savn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const eval::ComparisonRow& find_row(const std::vector<eval::ComparisonRow>& rows, const std::string& model) {
  for (const auto& r : rows) {
    if (r.model == model) return r;
  }
  throw std::runtime_error("no row for " + model);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"directional adaptation benchmark"};
  std::string config_path, results_path = "benchmarks/results/directional.json";
  std::vector<std::string> overrides;
  int seeds = 5;
  bool reuse = false;
  app.add_option("-c,--config", config_path, "experiment config")->required();
  app.add_option("--set", overrides, "config override (repeatable)");
  app.add_option("--seeds", seeds, "training seeds");
  app.add_option("--results", results_path, "where to write the JSON summary");
  app.add_flag("--reuse-runs", reuse, "skip training for runs that already have a summary");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto base = cli::load_config(fs::path(config_path), overrides);
    std::cerr << "generating fixtures under " << base.output_root() << "\n";
    cli::cmd_generate(base);

    std::vector<fs::path> a3c_ckpts, savn_ckpts;
    json training = json::array();
    for (int s = 1; s <= seeds; ++s) {
      for (bool adaptive : {false, true}) {
        auto cfg = base;
        cfg.seed = static_cast<std::uint64_t>(s);
        if (!adaptive) {
          cfg.trainer.interaction = trainer::InteractionKind::None;
          cfg.trainer.alpha = 0.0;
        }
        const std::string name = std::string(adaptive ? "savn" : "a3c") + "_seed" + std::to_string(s);
        auto dir = base.output_root() / "runs" / name;
        if (reuse && fs::exists(dir / "summary.json")) {
          std::cerr << "reusing " << name << "\n";
        } else {
          std::cerr << "training " << name << "\n";
          dir = cli::cmd_train(cfg, {.run_name = name, .quiet = false})[0];
        }
        (adaptive ? savn_ckpts : a3c_ckpts).push_back(dir / "best.ckpt");
        std::ifstream summary(dir / "summary.json");
        auto js = json::parse(summary);
        std::ifstream meta(dir / "metadata.json");
        js["wall_seconds"] = json::parse(meta)["wall_seconds"];
        js["run"] = name;
        training.push_back(js);
      }
    }

    std::vector<fs::path> all = a3c_ckpts;
    all.insert(all.end(), savn_ckpts.begin(), savn_ckpts.end());
    std::cerr << "evaluating\n";
    const auto rows = cli::cmd_eval(base, {.checkpoints = all, .baselines = {"random"}, .name = "directional"});
    std::ifstream reports_in(base.output_root() / "eval" / "directional" / "reports.json");
    const auto reports = json::parse(reports_in);

    json ablation = json::array();
    std::vector<double> ablation_success;
    for (std::size_t n = 0; n <= 4; ++n) {
      std::cerr << "evaluating with " << n << " inner updates\n";
      const auto r = cli::cmd_eval(base, {.checkpoints = savn_ckpts,
                                          .name = "ablation_" + std::to_string(n),
                                          .inner_updates = n,
                                          .skip_no_adapt = true});
      ablation.push_back({{"inner_updates", n}, {"success", r[0].success}, {"std_success", r[0].std_success},
                          {"spl", r[0].spl}, {"std_spl", r[0].std_spl}});
      ablation_success.push_back(r[0].success);
    }

    const auto& savn = find_row(rows, "savn");
    const auto& a3c = find_row(rows, "a3c");
    auto curve_of = [&](const std::string& model) {
      const auto& pooled = reports.at(model).at("pooled");
      return json{{"ratio", pooled.at("failed_ratio_curve")}, {"actions", pooled.at("failed_curve_actions")}};
    };
    const json savn_curve = curve_of("savn");
    const auto first_ratio = savn_curve.at("ratio").front().get<double>();
    const auto last_ratio = savn_curve.at("ratio").back().get<double>();
    bool monotone = true;
    for (std::size_t i = 1; i < ablation_success.size(); ++i) monotone &= ablation_success[i] >= ablation_success[i - 1];

    json table = eval::rows_to_json(rows);
    json out = {{"config", cli::config_to_json(base)},
                {"seeds", seeds},
                {"training", training},
                {"comparison", table},
                {"failed_curves",
                 {{"savn", savn_curve}, {"a3c", curve_of("a3c")}}},
                {"ablation", ablation},
                {"checks",
                 {{"savn_success_at_least_a3c", savn.success >= a3c.success},
                  {"savn_failed_ratio_last_le_first", last_ratio <= first_ratio},
                  {"ablation_non_decreasing", monotone}}}};
    fs::create_directories(fs::path(results_path).parent_path());
    std::ofstream(results_path) << out.dump(2) << "\n";

    std::ostringstream md;
    md << "| model | success | spl | std success | std spl |\n|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      md << "| " << r.model << " | " << r.success << " | " << r.spl << " | " << r.std_success << " | " << r.std_spl
         << " |\n";
    }
    md << "\nSAVN failed-action ratio: first bucket " << first_ratio << ", last bucket " << last_ratio << "\n\n";
    md << "| allowed inner updates | success | std |\n|---|---|---|\n";
    for (const auto& a : ablation) md << "| " << a["inner_updates"] << " | " << a["success"] << " | " << a["std_success"] << " |\n";
    auto md_path = fs::path(results_path).replace_extension(".md");
    std::ofstream(md_path) << md.str();
    std::cout << md.str();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
