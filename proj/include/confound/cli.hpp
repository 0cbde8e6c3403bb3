#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "causal.hpp"
#include "io.hpp"
#include "scenarios.hpp"

namespace confound::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kNegative = 1, kUsage = 2, kInternal = 3 };

struct GlobalFlags {
  std::uint64_t seed = 0;
  int k1 = 5;
  int k2 = 5;
  int actions = 10;
  int decisions = 2;
  std::size_t samples_per_day = 400'000;
  double epsilon = 0.05;
  double min_gap = 0.02;
  int days = 6;
  unsigned threads = 1;
  std::string out_dir;
  std::string ground_truth_file;
  bool dump_log = false;
};

inline std::string default_out_dir() {
  if (const char* env = std::getenv("CONFOUND_OUT_DIR"); env && *env) return env;
  return ".";
}

inline ScenarioConfig make_config(const GlobalFlags& g, bool two_decision = false) {
  ScenarioConfig cfg;
  cfg.spec = {g.k1, g.k2, g.actions, two_decision ? std::optional<int>(g.decisions) : std::nullopt};
  cfg.samples_per_day = g.samples_per_day;
  cfg.epsilon = g.epsilon;
  cfg.seed = g.seed;
  cfg.min_gap = g.min_gap;
  cfg.days = g.days;
  cfg.threads = g.threads;
  cfg.keep_log = g.dump_log;
  cfg.validate();
  return cfg;
}

/// Writes scenario artifacts into the output directory and returns their file names.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::string scenario) : dir_(std::move(dir)), scenario_(std::move(scenario)) {
    std::filesystem::create_directories(dir_);
  }

  std::ofstream open(const std::string& suffix) {
    const std::string name = scenario_ + suffix;
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + (dir_ / name).string() + " for writing");
    files_.push_back(name);
    return f;
  }

  void manifest(const json& config, std::uint64_t seed, const GroundTruth& gt) {
    auto f = open(".manifest.json");
    json m{{"scenario", scenario_},
           {"config", config},
           {"seed", seed},
           {"artifacts", files_},
           {"tool_version", kToolVersion},
           {"ground_truth_fingerprint", fingerprint(gt)}};
    f << m.dump(2) << '\n';
  }

 private:
  std::filesystem::path dir_;
  std::string scenario_;
  std::vector<std::string> files_;
};

inline GroundTruth load_or_make_ground_truth(const GlobalFlags& g, const ScenarioConfig& cfg, bool with_sale) {
  if (g.ground_truth_file.empty()) return scenario_ground_truth(cfg, with_sale);
  std::ifstream f(g.ground_truth_file);
  if (!f) throw std::invalid_argument("cannot read ground truth file " + g.ground_truth_file);
  GroundTruth gt = ground_truth_from_json(json::parse(f));
  if (!(gt.spec == cfg.spec)) throw std::invalid_argument("ground truth file spec does not match --k1/--k2/--actions");
  if (with_sale && !gt.sale_logit) throw std::invalid_argument("ground truth file has no sale model");
  return gt;
}

inline void write_ground_truth(ArtifactWriter& w, const GroundTruth& gt) { w.open(".ground_truth.json") << to_json(gt).dump(2) << '\n'; }

inline int cmd_feature_engineering(const GlobalFlags& g, std::ostream& out) {
  const ScenarioConfig cfg = make_config(g);
  const GroundTruth gt = load_or_make_ground_truth(g, cfg, false);
  const ScenarioResult res = scenario_feature_engineering(gt, cfg);
  ArtifactWriter w(g.out_dir, "feature_engineering");
  {
    auto f = w.open(".csv");
    write_reports_csv(f, res.reports);
  }
  json summary{{"scenario", "feature_engineering"}, {"confounding_gap", gt.gap}, {"days", json::array()}};
  for (const auto& r : res.reports) summary["days"].push_back(to_json(r));
  w.open(".json") << summary.dump(2) << '\n';
  write_ground_truth(w, gt);
  if (res.log) {
    auto f = w.open(".log.ndjson");
    write_ndjson(f, *res.log);
  }
  w.manifest(to_json(cfg), cfg.seed, gt);
  for (const auto& r : res.reports) out << "day " << r.day << " expected_ctr " << detail::fmt_prob(r.expected_ctr) << '\n';
  return kOk;
}

enum class AbRegime { Shared, Separate, Both };

inline int cmd_ab_test(const GlobalFlags& g, AbRegime regime, int ab_start_day, const std::string& arm_b, std::ostream& out) {
  ScenarioConfig cfg = make_config(g);
  cfg.ab_start_day = ab_start_day;
  cfg.arm_b_features = CovariateSet::parse(arm_b);
  const GroundTruth gt = load_or_make_ground_truth(g, cfg, false);
  std::vector<DayReport> reports;
  std::optional<Log> shared_log, separate_log;
  if (regime != AbRegime::Separate) {
    cfg.shared_log = true;
    auto res = scenario_ab_test(gt, cfg);
    reports.insert(reports.end(), res.reports.begin(), res.reports.end());
    shared_log = std::move(res.log);
  }
  if (regime != AbRegime::Shared) {
    cfg.shared_log = false;
    auto res = scenario_ab_test(gt, cfg);
    reports.insert(reports.end(), res.reports.begin(), res.reports.end());
    separate_log = std::move(res.log);
  }
  ArtifactWriter w(g.out_dir, "ab_test");
  {
    auto f = w.open(".csv");
    write_reports_csv(f, reports);
  }
  json summary{{"scenario", "ab_test"}, {"highlighted_arm", "A"}, {"confounding_gap", gt.gap}, {"rows", json::array()}};
  for (const auto& r : reports) summary["rows"].push_back(to_json(r));
  w.open(".json") << summary.dump(2) << '\n';
  write_ground_truth(w, gt);
  if (shared_log) {
    auto f = w.open(".shared.log.ndjson");
    write_ndjson(f, *shared_log);
  }
  if (separate_log) {
    auto f = w.open(".separate.log.ndjson");
    write_ndjson(f, *separate_log);
  }
  json config = to_json(cfg);
  config["regime"] = regime == AbRegime::Both ? "both" : (regime == AbRegime::Shared ? "shared" : "separate");
  config.erase("shared_log");
  w.manifest(config, cfg.seed, gt);
  for (const auto& r : reports)
    if (r.arm != "B") out << r.scenario << " day " << r.day << " arm " << (r.arm.empty() ? "-" : r.arm) << " expected_ctr " << detail::fmt_prob(r.expected_ctr) << '\n';
  return kOk;
}

inline void write_comparison(const GlobalFlags& g, const ComparisonReport& rep, json config, std::ostream& out) {
  ArtifactWriter w(g.out_dir, rep.scenario);
  {
    auto f = w.open(".csv");
    write_comparison_csv(f, rep);
  }
  w.open(".json") << to_json(rep).dump(2) << '\n';
  write_ground_truth(w, rep.gt);
  if (rep.log) {
    auto f = w.open(".log.ndjson");
    write_ndjson(f, *rep.log);
  }
  w.manifest(config, g.seed, rep.gt);
  for (const auto& r : rep.rows) out << r.variant << " (" << r.features << ") exact_reward " << detail::fmt_prob(r.exact_reward) << '\n';
}

inline int cmd_click_sale(const GlobalFlags& g, const std::string& x_prime, const std::string& x_dprime, std::ostream& out) {
  const ScenarioConfig cfg = make_config(g);
  const CovariateSet xp = CovariateSet::parse(x_prime);
  const CovariateSet xpp = CovariateSet::parse(x_dprime);
  const GroundTruth gt = load_or_make_ground_truth(g, cfg, true);
  json config = to_json(cfg);
  config["x_prime"] = xp.str();
  config["x_dprime"] = xpp.str();
  write_comparison(g, scenario_click_sale(gt, cfg, xp, xpp), config, out);
  return kOk;
}

inline int cmd_two_decision(const GlobalFlags& g, const std::string& x_prime, const std::string& x_dprime, const SearchConfig& search,
                            const std::string& trace_file, std::ostream& out) {
  const ScenarioConfig cfg = make_config(g, true);
  TwoDecisionOptions opts;
  opts.action_view = CovariateSet::parse(x_prime);
  opts.decision_view = CovariateSet::parse(x_dprime);
  opts.search = search;
  const GroundTruth gt = load_or_make_ground_truth(g, cfg, false);
  std::ofstream trace;
  SearchTraceSink sink;
  if (!trace_file.empty()) {
    trace.open(std::filesystem::path(g.out_dir) / trace_file, std::ios::binary);
    if (!trace) throw std::runtime_error("cannot open trace file " + trace_file);
    trace << "iteration,exact_objective,gradient_norm\n";
    sink = [&](const SearchTracePoint& p) {
      trace << p.iteration << ',' << detail::fmt_prob(p.exact_objective) << ',' << detail::fmt_prob(p.gradient_norm) << '\n';
    };
  }
  json config = to_json(cfg);
  config["x_prime"] = opts.action_view.str();
  config["x_dprime"] = opts.decision_view.str();
  config["search"] = {{"learning_rate", search.learning_rate},
                      {"iterations", search.iterations},
                      {"batch_size", search.batch_size},
                      {"baseline", search.baseline == Baseline::None ? "none" : "running-mean"},
                      {"seed", search.seed}};
  write_comparison(g, scenario_two_decision(gt, cfg, opts, sink), config, out);
  return kOk;
}

inline std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> names;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',' || ch == ' ' || ch == '{' || ch == '}') {
      if (!cur.empty()) names.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  return names;
}

inline int cmd_dag_check(const std::string& graph_file, const std::string& edges, const std::string& treatment,
                         const std::string& outcome, const std::string& adjust, std::ostream& out) {
  std::string text = edges;
  if (!graph_file.empty()) {
    std::ifstream f(graph_file);
    if (!f) throw std::invalid_argument("cannot read graph file " + graph_file);
    std::stringstream buf;
    buf << f.rdbuf();
    text = buf.str() + "\n" + edges;
  }
  const Dag g = Dag::parse(text);
  const auto zs = split_names(adjust);
  const bool ok = backdoor_admissible(g, treatment, outcome, zs);
  out << (ok ? "admissible" : "inadmissible") << '\n';
  const auto desc = g.descendants(g.id(treatment));
  for (const auto& z : zs)
    if (desc[g.id(z)]) out << "descendant of treatment in adjustment set: " << z << '\n';
  for (const auto& p : backdoor_paths(g, treatment, outcome, zs)) out << (p.open ? "open" : "blocked") << " backdoor path: " << p.str(g) << '\n';
  return ok ? kOk : kNegative;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Confounding in recommender feedback loops: scenario simulator and identification checks", "confound"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  g.out_dir = default_out_dir();
  app.add_option("--seed", g.seed, "Root seed")->capture_default_str();
  app.add_option("--k1", g.k1, "States of x1")->capture_default_str();
  app.add_option("--k2", g.k2, "States of x2")->capture_default_str();
  app.add_option("--actions", g.actions, "Number of actions")->capture_default_str();
  app.add_option("--samples-per-day", g.samples_per_day, "Impressions per simulated day")->capture_default_str();
  app.add_option("--epsilon", g.epsilon, "Exploration rate of epsilon-greedy policies")->capture_default_str();
  app.add_option("--min-gap", g.min_gap, "Minimum confounding gap of the generated environment")->capture_default_str();
  app.add_option("--days", g.days, "Schedule length")->capture_default_str();
  app.add_option("--threads", g.threads, "Simulation worker threads (does not change output)")->capture_default_str();
  app.add_option("--out", g.out_dir, "Output directory (default $CONFOUND_OUT_DIR or .)");
  app.add_option("--ground-truth", g.ground_truth_file, "Replay a serialized ground truth instead of generating one");
  app.add_flag("--dump-log", g.dump_log, "Also write the interaction log as newline-delimited JSON");

  auto* fe = app.add_subcommand("feature-engineering", "Day 0-5 feature removal schedule");

  auto* ab = app.add_subcommand("ab-test", "A/B test with shared or separate training logs");
  bool shared = false, separate = false, both = false;
  int ab_start = 2;
  std::string arm_b = "x1,x2";
  auto* o_shared = ab->add_flag("--shared-log", shared, "Both arms train on the pooled log (default)");
  auto* o_sep = ab->add_flag("--separate-logs", separate, "Each arm trains on its own log");
  auto* o_both = ab->add_flag("--both", both, "Run both regimes");
  o_shared->excludes(o_sep)->excludes(o_both);
  o_sep->excludes(o_both);
  ab->add_option("--ab-start-day", ab_start, "First day of the split")->capture_default_str();
  ab->add_option("--arm-b-features", arm_b, "Covariates arm B models use")->capture_default_str();

  auto* cs = app.add_subcommand("click-sale", "Separately trained sale and click models");
  std::string cs_xp = "x1", cs_xpp = "x2";
  cs->add_option("--x-prime", cs_xp, "Sale model covariates, e.g. {X1} or x1,x2")->capture_default_str();
  cs->add_option("--x-dprime", cs_xpp, "Click model covariates")->capture_default_str();

  auto* td = app.add_subcommand("two-decision", "Joint versus factored display/recommendation policies");
  std::string td_xp = "x1", td_xpp = "x2", trace_file, baseline = "running-mean";
  SearchConfig search;
  td->add_option("--x-prime", td_xp, "Covariates of the action factor")->capture_default_str();
  td->add_option("--x-dprime", td_xpp, "Covariates of the decision factor")->capture_default_str();
  td->add_option("--decisions", g.decisions, "Number of display decisions")->capture_default_str();
  td->add_option("--learning-rate", search.learning_rate)->capture_default_str();
  td->add_option("--iterations", search.iterations)->capture_default_str();
  td->add_option("--batch-size", search.batch_size)->capture_default_str();
  td->add_option("--baseline", baseline)->check(CLI::IsMember({"none", "running-mean"}))->capture_default_str();
  td->add_option("--search-seed", search.seed)->capture_default_str();
  td->add_option("--trace", trace_file, "Write the optimization trace CSV (relative to --out)");

  auto* dag = app.add_subcommand("dag-check", "Backdoor admissibility of an adjustment set");
  std::string graph_file, edges, treatment = "a", outcome = "c", adjust;
  dag->add_option("graph", graph_file, "Edge-list file ('from -> to' per line, '#' comments)");
  dag->add_option("--edges", edges, "Inline edge list, ';' separated");
  dag->add_option("--treatment", treatment)->capture_default_str();
  dag->add_option("--outcome", outcome)->capture_default_str();
  dag->add_option("--adjust", adjust, "Adjustment set, e.g. x1 or {x1,x2}");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fe) return cmd_feature_engineering(g, out);
    if (*ab) return cmd_ab_test(g, both ? AbRegime::Both : (separate ? AbRegime::Separate : AbRegime::Shared), ab_start, arm_b, out);
    if (*cs) return cmd_click_sale(g, cs_xp, cs_xpp, out);
    if (*td) {
      search.baseline = baseline == "none" ? Baseline::None : Baseline::RunningMean;
      return cmd_two_decision(g, td_xp, td_xpp, search, trace_file, out);
    }
    if (*dag) {
      if (graph_file.empty() && edges.empty()) throw std::invalid_argument("dag-check: give a graph file or --edges");
      return cmd_dag_check(graph_file, edges, treatment, outcome, adjust, out);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace confound::cli
