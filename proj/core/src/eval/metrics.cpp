#include "savn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace savn::eval {

void to_json(nlohmann::json& j, const EpisodeResult& r) {
  j = {{"task_index", r.task_index},   {"success", r.success},         {"path_length", r.path_length},
       {"optimal_length", r.optimal_length}, {"failed", r.failed}, {"actions", r.actions},
       {"scene_type", r.scene_type},
       {"scene_index", r.scene_index}, {"target", r.target},           {"total_reward", r.total_reward},
       {"inner_updates", r.inner_updates}};
}

void from_json(const nlohmann::json& j, EpisodeResult& r) {
  r.task_index = j.at("task_index").get<std::size_t>();
  r.success = j.at("success").get<bool>();
  r.path_length = j.at("path_length").get<int>();
  r.optimal_length = j.at("optimal_length").get<int>();
  r.failed = j.at("failed").get<std::vector<bool>>();
  r.actions = j.value("actions", std::vector<int>{});
  r.scene_type = j.value("scene_type", std::string("gridworld"));
  r.scene_index = j.value("scene_index", std::size_t{0});
  r.target = j.value("target", 0);
  r.total_reward = j.value("total_reward", 0.0);
  r.inner_updates = j.value("inner_updates", 0);
}

double success_rate(std::span<const EpisodeResult> results) {
  if (results.empty()) throw MetricsError("success_rate: empty result set");
  double total = 0.0;
  for (const auto& r : results) total += r.success ? 1.0 : 0.0;
  return total / static_cast<double>(results.size());
}

double spl(std::span<const EpisodeResult> results) {
  if (results.empty()) throw MetricsError("spl: empty result set");
  double total = 0.0;
  for (const auto& r : results) {
    if (!r.success) continue;
    const int denom = std::max(r.path_length, r.optimal_length);
    total += denom == 0 ? 1.0 : static_cast<double>(r.optimal_length) / denom;
  }
  return total / static_cast<double>(results.size());
}

std::vector<EpisodeResult> filter_min_optimal(std::span<const EpisodeResult> results, int threshold) {
  std::vector<EpisodeResult> out;
  std::copy_if(results.begin(), results.end(), std::back_inserter(out),
               [&](const EpisodeResult& r) { return r.optimal_length >= threshold; });
  return out;
}

FailedActionCurve failed_action_curve(std::span<const EpisodeResult> results, std::size_t buckets) {
  if (buckets == 0) throw MetricsError("failed_action_curve: need at least one bucket");
  FailedActionCurve curve{std::vector<double>(buckets, 0.0), std::vector<std::size_t>(buckets, 0)};
  std::vector<std::size_t> failed(buckets, 0);
  for (const auto& r : results) {
    const std::size_t P = r.failed.size();
    for (std::size_t s = 0; s < P; ++s) {
      const std::size_t b = s * buckets / P;
      ++curve.actions[b];
      if (r.failed[s]) ++failed[b];
    }
  }
  for (std::size_t b = 0; b < buckets; ++b) {
    if (curve.actions[b]) curve.ratio[b] = static_cast<double>(failed[b]) / static_cast<double>(curve.actions[b]);
  }
  return curve;
}

MetricsReport summarize(std::span<const EpisodeResult> results, std::size_t buckets, int min_optimal) {
  MetricsReport rep;
  rep.episodes = results.size();
  rep.success_rate = success_rate(results);
  rep.spl = spl(results);
  auto hard = filter_min_optimal(results, min_optimal);
  rep.episodes_L5 = hard.size();
  if (!hard.empty()) {
    rep.success_rate_L5 = success_rate(hard);
    rep.spl_L5 = spl(hard);
  }
  rep.failed_curve = failed_action_curve(results, buckets);
  for (const auto& r : results) ++rep.counts_per_scene_type[r.scene_type];
  return rep;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

std::vector<std::size_t> task_ids(const std::vector<EpisodeResult>& rs) {
  std::vector<std::size_t> ids;
  for (const auto& r : rs) ids.push_back(r.task_index);
  return ids;
}

}  // namespace

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"episodes", r.episodes},
       {"success", r.success_rate},
       {"spl", r.spl},
       {"episodes_L5", r.episodes_L5},
       {"success_L5", opt(r.success_rate_L5)},
       {"spl_L5", opt(r.spl_L5)},
       {"failed_ratio_curve", r.failed_curve.ratio},
       {"failed_curve_actions", r.failed_curve.actions},
       {"counts_per_scene_type", r.counts_per_scene_type}};
}

std::vector<ComparisonRow> compare(std::span<const ModelResults> models, const std::string& split) {
  std::optional<std::vector<std::size_t>> reference;
  std::vector<ComparisonRow> rows;
  for (const auto& m : models) {
    if (m.per_seed.empty()) throw MetricsError("compare: model '" + m.model + "' has no result sets");
    std::vector<double> succ, spls, succ5, spl5;
    for (const auto& rs : m.per_seed) {
      auto ids = task_ids(rs);
      if (!reference) reference = ids;
      if (ids != *reference) throw MetricsError("compare: model '" + m.model + "' was evaluated on a different task set");
      succ.push_back(success_rate(rs));
      spls.push_back(spl(rs));
      auto hard = filter_min_optimal(rs);
      if (!hard.empty()) {
        succ5.push_back(success_rate(hard));
        spl5.push_back(spl(hard));
      }
    }
    ComparisonRow row;
    row.model = m.model;
    row.split = split;
    const auto s = mean_std(succ), p = mean_std(spls);
    row.success = s.mean;
    row.std_success = s.std;
    row.spl = p.mean;
    row.std_spl = p.std;
    if (!succ5.empty()) {
      row.success_L5 = mean_std(succ5).mean;
      row.spl_L5 = mean_std(spl5).mean;
    }
    row.n_episodes = m.per_seed.front().size();
    row.seed_count = m.per_seed.size();
    rows.push_back(row);
  }
  return rows;
}

void write_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  auto cell = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::setprecision(17) << *v;
    return s.str();
  };
  out << "model,split,success,spl,success_L5,spl_L5,n_episodes,seed_count,std_success,std_spl\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.split << ',' << cell(r.success) << ',' << cell(r.spl) << ',' << cell(r.success_L5)
        << ',' << cell(r.spl_L5) << ',' << r.n_episodes << ',' << r.seed_count << ',' << cell(r.std_success) << ','
        << cell(r.std_spl) << '\n';
  }
}

nlohmann::json rows_to_json(std::span<const ComparisonRow> rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.model},
                   {"split", r.split},
                   {"success", r.success},
                   {"spl", r.spl},
                   {"success_L5", opt(r.success_L5)},
                   {"spl_L5", opt(r.spl_L5)},
                   {"n_episodes", r.n_episodes},
                   {"seed_count", r.seed_count},
                   {"std_success", r.std_success},
                   {"std_spl", r.std_spl}});
  }
  return arr;
}

}  // namespace savn::eval
