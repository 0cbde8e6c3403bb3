#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "causal.hpp"
#include "environment.hpp"
#include "glm.hpp"
#include "log.hpp"
#include "policy.hpp"
#include "policy_search.hpp"
#include "rng.hpp"

namespace confound {

struct ScenarioConfig {
  CategoricalSpec spec;
  std::size_t samples_per_day = 400'000;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  double min_gap = 0.02;
  int ab_start_day = 2;
  int days = 6;
  bool shared_log = true;
  CovariateSet arm_b_features = CovariateSet::both();
  bool keep_log = false;  ///< retain every interaction for export
  unsigned threads = 1;   ///< worker threads; never changes results

  void validate() const {
    spec.validate();
    if (samples_per_day < 1) throw std::invalid_argument("ScenarioConfig: samples_per_day must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("ScenarioConfig: epsilon must lie in [0, 1]");
    if (days < 1) throw std::invalid_argument("ScenarioConfig: days must be >= 1");
    if (ab_start_day < 1) throw std::invalid_argument("ScenarioConfig: ab_start_day must be >= 1");
    if (threads < 1) throw std::invalid_argument("ScenarioConfig: threads must be >= 1");
  }
};

/// One row of a per-day trajectory.
struct DayReport {
  std::string scenario;
  std::string arm;  ///< "A", "B" or empty before/without a split
  int day = 0;
  std::size_t samples = 0;
  double empirical_ctr = 0.0;
  double binomial_se = 0.0;
  double expected_ctr = 0.0;  ///< exact, by enumeration
  double oracle_ctr = 0.0;    ///< best deterministic policy with the same visibility
  double regret = 0.0;
  std::string features_used;
  std::optional<DayRange> trained_on;
};

/// Records per stream chunk. Fixed, so output does not depend on the thread count.
inline constexpr std::size_t kChunkSize = 16'384;

struct SimulationOptions {
  bool with_sales = false;
  unsigned threads = 1;
};

struct ArmPolicy {
  char label = 0;
  const Policy* policy = nullptr;
};

namespace detail {

inline constexpr std::uint64_t kSimTag = 0x73696d756c617465ULL;

struct PolicySampler {
  std::vector<std::vector<double>> rows;  // per context CDF over joint actions
  const Policy* policy = nullptr;
};

}  // namespace detail

/// Generates n i.i.d. interactions for one day.
///
/// Records are produced in fixed-size chunks, chunk c drawing from a stream
/// derived from (seed, day, c). With more than one arm each record is
/// assigned an arm uniformly at random before its action is drawn.
inline std::vector<Interaction> simulate_interactions(const GroundTruth& gt, const std::vector<ArmPolicy>& arms, std::size_t n,
                                                      int day, std::uint64_t seed, const SimulationOptions& opts = {}) {
  if (n == 0) throw std::invalid_argument("simulate: n must be >= 1");
  if (arms.empty()) throw std::invalid_argument("simulate: at least one arm required");
  if (opts.with_sales && !gt.sale_logit) throw std::invalid_argument("simulate: sales requested but ground truth has no sale model");
  const auto& s = gt.spec;
  const auto k2 = static_cast<std::size_t>(s.k2);
  const int D = s.decisions();

  const auto cdf_x1 = make_cdf(gt.p_x1);
  std::vector<std::vector<double>> cdf_x2;
  for (int x1 = 0; x1 < s.k1; ++x1)
    cdf_x2.push_back(make_cdf(std::span<const double>(gt.p_x2_given_x1).subspan(static_cast<std::size_t>(x1) * k2, k2)));
  std::vector<detail::PolicySampler> samplers;
  for (const auto& arm : arms) {
    if (arm.policy == nullptr) throw std::invalid_argument("simulate: null policy");
    check_policy_shape(gt, *arm.policy);
    detail::PolicySampler ps;
    ps.policy = arm.policy;
    for (int x1 = 0; x1 < s.k1; ++x1)
      for (int x2 = 0; x2 < s.k2; ++x2) ps.rows.push_back(make_cdf(arm.policy->row(x1, x2)));
    samplers.push_back(std::move(ps));
  }

  std::vector<Interaction> out(n);
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  auto run_chunk = [&](std::size_t c) {
    Stream rng(derive_seed(seed, {detail::kSimTag, static_cast<std::uint64_t>(day), c}));
    const std::size_t end = std::min(n, (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < end; ++i) {
      Interaction& r = out[i];
      r.day = day;
      r.x1 = static_cast<int>(rng.from_cdf(cdf_x1));
      r.x2 = static_cast<int>(rng.from_cdf(cdf_x2[static_cast<std::size_t>(r.x1)]));
      std::size_t arm = 0;
      if (samplers.size() > 1) arm = std::min(samplers.size() - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(samplers.size())));
      r.arm = arms[arm].label;
      const std::size_t ctx = static_cast<std::size_t>(r.x1) * k2 + static_cast<std::size_t>(r.x2);
      const int j = static_cast<int>(rng.from_cdf(samplers[arm].rows[ctx]));
      r.a = j / D;
      r.d = j % D;
      r.propensity = samplers[arm].policy->prob(r.x1, r.x2, j);
      r.click = rng.bernoulli(gt.click_prob(r.x1, r.x2, j));
      if (opts.with_sales && r.click) r.sale = rng.bernoulli(sigmoid((*gt.sale_logit)[gt.sale_index(r.x1, r.x2, r.a)]));
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(chunks)));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Fills a DayReport for the records of one arm (label 0 selects all records).
inline DayReport make_day_report(const GroundTruth& gt, const Policy& policy, std::span<const Interaction> records, char arm,
                                 int day, std::string scenario, std::optional<DayRange> trained_on) {
  std::size_t n = 0;
  std::size_t clicks = 0;
  for (const auto& r : records) {
    if (arm != 0 && r.arm != arm) continue;
    ++n;
    clicks += r.click ? 1 : 0;
  }
  DayReport rep;
  rep.scenario = std::move(scenario);
  rep.arm = arm ? std::string(1, arm) : std::string();
  rep.day = day;
  rep.samples = n;
  rep.empirical_ctr = n ? static_cast<double>(clicks) / static_cast<double>(n) : 0.0;
  rep.binomial_se = n ? std::sqrt(rep.empirical_ctr * (1.0 - rep.empirical_ctr) / static_cast<double>(n)) : 0.0;
  rep.expected_ctr = expected_policy_ctr(gt, policy);
  rep.oracle_ctr = expected_policy_ctr(gt, oracle_policy(gt, policy.visibility));
  rep.regret = rep.oracle_ctr - rep.expected_ctr;
  rep.features_used = policy.visibility.str();
  rep.trained_on = trained_on;
  return rep;
}

struct DayResult {
  std::vector<Interaction> records;
  DayReport report;
};

/// Deploys `policy` for one day of n impressions.
inline DayResult run_day(const GroundTruth& gt, const Policy& policy, std::size_t n, int day, std::uint64_t seed,
                         const SimulationOptions& opts = {}) {
  DayResult res;
  res.records = simulate_interactions(gt, {{0, &policy}}, n, day, seed, opts);
  res.report = make_day_report(gt, policy, res.records, 0, day, "", std::nullopt);
  return res;
}

struct ScenarioResult {
  GroundTruth gt;
  std::vector<DayReport> reports;
  std::optional<Log> log;
};

/// Ground truth for a scenario config.
inline GroundTruth scenario_ground_truth(const ScenarioConfig& cfg, bool with_sale = false) {
  GroundTruthOptions opts;
  opts.with_sale = with_sale;
  opts.logging_epsilon = cfg.epsilon;
  return make_default_ground_truth(cfg.spec, cfg.seed, cfg.min_gap, opts);
}

/// Covariates each day's log is fitted with before deploying on the next day:
/// x1 after Day 0, x1 and x2 after Day 1, x1 from then on.
inline std::vector<CovariateSet> default_feature_schedule(int days) {
  std::vector<CovariateSet> s(static_cast<std::size_t>(std::max(days, 1)), CovariateSet::x1_only());
  if (days > 1) s[1] = CovariateSet::both();
  return s;
}

/// Day 0 explores uniformly; every later day deploys epsilon-greedy on a
/// model fitted to the previous day's log with the scheduled covariates.
inline ScenarioResult scenario_feature_engineering(const GroundTruth& gt, const ScenarioConfig& cfg,
                                                   std::vector<CovariateSet> fit_schedule = {}) {
  cfg.validate();
  if (!(gt.spec == cfg.spec)) throw std::invalid_argument("scenario_feature_engineering: ground truth spec mismatch");
  if (fit_schedule.empty()) fit_schedule = default_feature_schedule(cfg.days);
  if (fit_schedule.size() + 1 < static_cast<std::size_t>(cfg.days))
    throw std::invalid_argument("scenario_feature_engineering: feature schedule shorter than the run");
  ScenarioResult res{gt, {}, std::nullopt};
  if (cfg.keep_log) res.log.emplace(cfg.spec);
  const SimulationOptions sim{false, cfg.threads};
  Policy policy = uniform_policy(cfg.spec);
  std::optional<DayRange> trained_on;
  for (int day = 0; day < cfg.days; ++day) {
    auto records = simulate_interactions(gt, {{0, &policy}}, cfg.samples_per_day, day, cfg.seed, sim);
    res.reports.push_back(make_day_report(gt, policy, records, 0, day, "feature_engineering", trained_on));
    if (day + 1 < cfg.days) {
      const FeatureSpec fs{cfg.spec, fit_schedule[static_cast<std::size_t>(day)], {true, cfg.spec.two_decision()}};
      const FittedModel m = fit(LogView{cfg.spec, records}, fs, Target::Click);
      policy = epsilon_greedy(m, cfg.epsilon, cfg.spec);
      trained_on = m.trained_on;
    }
    if (res.log) res.log->append(records);
  }
  return res;
}

inline ScenarioResult scenario_feature_engineering(const ScenarioConfig& cfg) {
  return scenario_feature_engineering(scenario_ground_truth(cfg), cfg);
}

/// Two-arm A/B test starting on cfg.ab_start_day.
///
/// Before the split a single system runs (uniform on Day 0, then epsilon-greedy
/// on x1-only fits of the previous day). From the split on, traffic is divided
/// 50/50; arm A fits x1-only models and arm B fits cfg.arm_b_features models.
/// With a shared log both arms train on the whole previous day; otherwise each
/// arm trains on its own half. Reports carry one row per arm per split day.
inline ScenarioResult scenario_ab_test(const GroundTruth& gt, const ScenarioConfig& cfg) {
  cfg.validate();
  if (!(gt.spec == cfg.spec)) throw std::invalid_argument("scenario_ab_test: ground truth spec mismatch");
  if (cfg.ab_start_day < 1 || cfg.ab_start_day >= cfg.days)
    throw std::invalid_argument("scenario_ab_test: ab_start_day must satisfy 1 <= ab_start_day < days");
  const std::string name = cfg.shared_log ? "ab_test_shared" : "ab_test_separate";
  ScenarioResult res{gt, {}, std::nullopt};
  if (cfg.keep_log) res.log.emplace(cfg.spec);
  const SimulationOptions sim{false, cfg.threads};
  const ActionFactors factors{true, cfg.spec.two_decision()};
  auto fit_on = [&](const std::vector<Interaction>& records, char arm, CovariateSet cov) {
    std::vector<Interaction> subset;
    std::span<const Interaction> view = records;
    if (arm != 0) {
      for (const auto& r : records)
        if (r.arm == arm) subset.push_back(r);
      view = subset;
    }
    return fit(LogView{cfg.spec, view}, FeatureSpec{cfg.spec, cov, factors}, Target::Click);
  };

  Policy single = uniform_policy(cfg.spec);
  Policy arm_a = single;
  Policy arm_b = single;
  std::optional<DayRange> trained_on;
  std::vector<Interaction> previous;
  for (int day = 0; day < cfg.days; ++day) {
    const bool split = day >= cfg.ab_start_day;
    if (day > 0) {
      if (!split) {
        const FittedModel m = fit_on(previous, 0, CovariateSet::x1_only());
        single = epsilon_greedy(m, cfg.epsilon, cfg.spec);
        trained_on = m.trained_on;
      } else {
        // The first split day trains on the pre-split log, which both arms share.
        const bool pooled = cfg.shared_log || day == cfg.ab_start_day;
        const FittedModel ma = fit_on(previous, pooled ? 0 : 'A', CovariateSet::x1_only());
        const FittedModel mb = fit_on(previous, pooled ? 0 : 'B', cfg.arm_b_features);
        arm_a = epsilon_greedy(ma, cfg.epsilon, cfg.spec);
        arm_b = epsilon_greedy(mb, cfg.epsilon, cfg.spec);
        trained_on = ma.trained_on;
      }
    }
    std::vector<Interaction> records;
    if (!split) {
      records = simulate_interactions(gt, {{0, &single}}, cfg.samples_per_day, day, cfg.seed, sim);
      res.reports.push_back(make_day_report(gt, single, records, 0, day, name, trained_on));
    } else {
      records = simulate_interactions(gt, {{'A', &arm_a}, {'B', &arm_b}}, cfg.samples_per_day, day, cfg.seed, sim);
      res.reports.push_back(make_day_report(gt, arm_a, records, 'A', day, name, trained_on));
      res.reports.push_back(make_day_report(gt, arm_b, records, 'B', day, name, trained_on));
    }
    if (res.log) res.log->append(records);
    previous = std::move(records);
  }
  return res;
}

inline ScenarioResult scenario_ab_test(const ScenarioConfig& cfg) { return scenario_ab_test(scenario_ground_truth(cfg), cfg); }

/// Exact comparison of policy variants on one logged day.
struct PolicyComparison {
  std::string variant;
  std::string features;
  double exact_reward = 0.0;  ///< true expected reward by enumeration
  std::optional<double> model_objective;  ///< objective under the fitted joint model, where one applies
};

struct ComparisonReport {
  std::string scenario;
  GroundTruth gt;
  std::size_t samples = 0;
  double oracle_reward = 0.0;
  std::vector<PolicyComparison> rows;
  std::optional<Log> log;

  const PolicyComparison& row(const std::string& variant) const {
    for (const auto& r : rows)
      if (r.variant == variant) return r;
    throw std::out_of_range("ComparisonReport: no variant '" + variant + "'");
  }
};

/// Separately trained sale and click models combined by product-argmax.
///
/// One day is logged under uniform exploration with post-click sales. The sale
/// model sees x' and is trained on clicked records only; the click model sees
/// x''. Variants: "product" (x', x''), "product_full" (x1,x2 for both) and the
/// true "oracle"; rewards are exact E[c * s].
inline ComparisonReport scenario_click_sale(const GroundTruth& gt, const ScenarioConfig& cfg, CovariateSet x_prime,
                                            CovariateSet x_dprime) {
  cfg.validate();
  if (!gt.sale_logit) throw std::invalid_argument("scenario_click_sale: ground truth has no sale model");
  if (gt.spec.two_decision()) throw std::invalid_argument("scenario_click_sale: not defined in two-decision mode");
  const Policy explore = uniform_policy(gt.spec);
  auto records = simulate_interactions(gt, {{0, &explore}}, cfg.samples_per_day, 0, cfg.seed, {true, cfg.threads});
  const LogView log{gt.spec, records};
  auto build = [&](CovariateSet sale_cov, CovariateSet click_cov) {
    const FittedModel sale = fit(log, FeatureSpec{gt.spec, sale_cov, {}}, Target::SaleGivenClick);
    const FittedModel click = fit(log, FeatureSpec{gt.spec, click_cov, {}}, Target::Click);
    return product_epsilon_greedy(sale, click, 0.0, gt.spec);
  };
  ComparisonReport rep;
  rep.scenario = "click_sale";
  rep.gt = gt;
  rep.samples = records.size();
  const Policy oracle = oracle_sale_policy(gt);
  rep.oracle_reward = expected_policy_sale_rate(gt, oracle);
  rep.rows.push_back({"product", x_prime.str() + "|" + x_dprime.str(), expected_policy_sale_rate(gt, build(x_prime, x_dprime)), {}});
  rep.rows.push_back({"product_full", "x1,x2|x1,x2", expected_policy_sale_rate(gt, build(CovariateSet::both(), CovariateSet::both())), {}});
  rep.rows.push_back({"oracle", "x1,x2", rep.oracle_reward, {}});
  if (cfg.keep_log) {
    rep.log.emplace(gt.spec);
    rep.log->append(records);
  }
  return rep;
}

inline ComparisonReport scenario_click_sale(const ScenarioConfig& cfg, CovariateSet x_prime, CovariateSet x_dprime) {
  return scenario_click_sale(scenario_ground_truth(cfg, true), cfg, x_prime, x_dprime);
}

struct TwoDecisionOptions {
  CovariateSet action_view = CovariateSet::x1_only();    ///< x'
  CovariateSet decision_view = CovariateSet::x2_only();  ///< x''
  SearchConfig search;
  double init_sharpness = 2.0;  ///< logit given to the independent fit's argmax when seeding the search
};

/// Deterministic factored policy from per-factor argmax of two fitted models.
inline FactoredPolicy independent_factored_policy(const FittedModel& action_model, const FittedModel& decision_model) {
  const auto& s = action_model.features.spec;
  FactoredPolicy t{s, action_model.features.included, decision_model.features.included, {}, {}};
  const auto A = static_cast<std::size_t>(s.n_actions);
  const auto D = static_cast<std::size_t>(s.decisions());
  t.action_probs.assign(action_model.beta.size(), 0.0);
  t.decision_probs.assign(decision_model.beta.size(), 0.0);
  for (std::size_t k = 0; k * A < action_model.beta.size(); ++k)
    t.action_probs[k * A + argmax(std::span<const double>(action_model.beta).subspan(k * A, A))] = 1.0;
  for (std::size_t k = 0; k * D < decision_model.beta.size(); ++k)
    t.decision_probs[k * D + argmax(std::span<const double>(decision_model.beta).subspan(k * D, D))] = 1.0;
  return t;
}

/// Joint model versus independently fitted factor models versus a
/// REINFORCE-optimized factored policy seeded at the independent fit.
/// Variants: "joint", "independent", "reinforce", plus the true "oracle".
inline ComparisonReport scenario_two_decision(const GroundTruth& gt, const ScenarioConfig& cfg, const TwoDecisionOptions& opts = {},
                                              const SearchTraceSink& trace = {}) {
  cfg.validate();
  if (!gt.spec.two_decision()) throw std::invalid_argument("scenario_two_decision: n_decisions absent");
  const auto& s = gt.spec;
  const Policy explore = uniform_policy(s);
  auto records = simulate_interactions(gt, {{0, &explore}}, cfg.samples_per_day, 0, cfg.seed, {false, cfg.threads});
  const LogView log{s, records};
  const FittedModel joint = fit(log, FeatureSpec{s, CovariateSet::both(), {true, true}}, Target::Click);
  const FittedModel action_model = fit(log, FeatureSpec{s, opts.action_view, {true, false}}, Target::Click);
  const FittedModel decision_model = fit(log, FeatureSpec{s, opts.decision_view, {false, true}}, Target::Click);
  const CovariateDistribution cov = gt.covariates();

  const Policy joint_policy = epsilon_greedy(joint, 0.0, s);
  const FactoredPolicy independent = independent_factored_policy(action_model, decision_model);

  FactoredPolicyParams init = FactoredPolicyParams::zeros(s, opts.action_view, opts.decision_view);
  for (std::size_t i = 0; i < init.xi.size(); ++i) init.xi[i] = opts.init_sharpness * independent.action_probs[i];
  for (std::size_t i = 0; i < init.gamma.size(); ++i) init.gamma[i] = opts.init_sharpness * independent.decision_probs[i];
  const FactoredPolicyParams learned = reinforce_optimize(joint, init, opts.search, cov, trace);

  // Model objective of the joint argmax policy: sum_x P(x) max_{a,d} P_model(c=1 | a, d, x).
  double joint_objective = 0.0;
  for (int x1 = 0; x1 < s.k1; ++x1)
    for (int x2 = 0; x2 < s.k2; ++x2) {
      double inner = 0.0;
      for (int j = 0; j < s.joint_actions(); ++j) inner += joint_policy.prob(x1, x2, j) * joint.predict(x1, x2, j / s.decisions(), j % s.decisions());
      joint_objective += cov.joint(x1, x2) * inner;
    }

  ComparisonReport rep;
  rep.scenario = "two_decision";
  rep.gt = gt;
  rep.samples = records.size();
  rep.oracle_reward = expected_policy_ctr(gt, oracle_policy(gt, CovariateSet::both()));
  const std::string factored = opts.action_view.str() + "|" + opts.decision_view.str();
  rep.rows.push_back({"joint", "x1,x2", expected_policy_ctr(gt, joint_policy), joint_objective});
  rep.rows.push_back({"independent", factored, expected_policy_ctr(gt, to_joint(independent)), exact_objective(joint, independent, cov)});
  // Deploy the learned softmax policy or its per-factor mode, whichever the
  // fitted model scores higher.
  FactoredPolicy deployed = factor_tables(learned);
  const FactoredPolicy rounded = mode_tables(learned);
  if (exact_objective(joint, rounded, cov) >= exact_objective(joint, deployed, cov)) deployed = rounded;
  rep.rows.push_back({"reinforce", factored, expected_policy_ctr(gt, to_joint(deployed)), exact_objective(joint, deployed, cov)});
  rep.rows.push_back({"oracle", "x1,x2", rep.oracle_reward, std::nullopt});
  if (cfg.keep_log) {
    rep.log.emplace(s);
    rep.log->append(records);
  }
  return rep;
}

inline ComparisonReport scenario_two_decision(const ScenarioConfig& cfg, const TwoDecisionOptions& opts = {}) {
  CategoricalSpec spec = cfg.spec;
  if (!spec.n_decisions) throw std::invalid_argument("scenario_two_decision: n_decisions absent");
  return scenario_two_decision(scenario_ground_truth(cfg), cfg, opts);
}

}  // namespace confound
