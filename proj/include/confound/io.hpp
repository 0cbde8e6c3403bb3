#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "environment.hpp"
#include "glm.hpp"
#include "log.hpp"
#include "policy_search.hpp"
#include "scenarios.hpp"

namespace confound {

using json = nlohmann::json;

inline json to_json(const CategoricalSpec& s) {
  json j{{"k1", s.k1}, {"k2", s.k2}, {"n_actions", s.n_actions}};
  if (s.n_decisions) j["n_decisions"] = *s.n_decisions;
  return j;
}

inline CategoricalSpec spec_from_json(const json& j) {
  CategoricalSpec s;
  s.k1 = j.at("k1").get<int>();
  s.k2 = j.at("k2").get<int>();
  s.n_actions = j.at("n_actions").get<int>();
  if (j.contains("n_decisions")) s.n_decisions = j.at("n_decisions").get<int>();
  s.validate();
  return s;
}

inline json to_json(const GroundTruth& gt) {
  json rows = json::array();
  for (int r = 0; r < gt.spec.k1; ++r) {
    const auto b = gt.p_x2_given_x1.begin() + static_cast<std::ptrdiff_t>(r) * gt.spec.k2;
    rows.push_back(std::vector<double>(b, b + gt.spec.k2));
  }
  json j{{"spec", to_json(gt.spec)},
         {"seed", gt.seed},
         {"confounding_gap", gt.gap},
         {"p_x1", gt.p_x1},
         {"p_x2_given_x1", rows},
         {"click_logit", {{"shape", {gt.spec.k1, gt.spec.k2, gt.spec.n_actions, gt.spec.decisions()}}, {"data", gt.click_logit}}}};
  if (gt.sale_logit) j["sale_logit"] = {{"shape", {gt.spec.k1, gt.spec.k2, gt.spec.n_actions}}, {"data", *gt.sale_logit}};
  return j;
}

inline GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth gt;
  gt.spec = spec_from_json(j.at("spec"));
  gt.seed = j.value("seed", std::uint64_t{0});
  gt.gap = j.value("confounding_gap", 0.0);
  gt.p_x1 = j.at("p_x1").get<std::vector<double>>();
  for (const auto& row : j.at("p_x2_given_x1")) {
    auto r = row.get<std::vector<double>>();
    gt.p_x2_given_x1.insert(gt.p_x2_given_x1.end(), r.begin(), r.end());
  }
  gt.click_logit = j.at("click_logit").at("data").get<std::vector<double>>();
  if (j.contains("sale_logit")) gt.sale_logit = j.at("sale_logit").at("data").get<std::vector<double>>();
  gt.validate();
  return gt;
}

inline json to_json(const FeatureSpec& fs) {
  return {{"included", fs.included.str()}, {"action_factors", fs.factors.str()}, {"spec", to_json(fs.spec)}};
}

inline FeatureSpec feature_spec_from_json(const json& j) {
  FeatureSpec fs;
  fs.spec = spec_from_json(j.at("spec"));
  fs.included = CovariateSet::parse(j.at("included").get<std::string>());
  const auto factors = j.at("action_factors").get<std::string>();
  fs.factors.a = factors.find('a') != std::string::npos;
  fs.factors.d = factors.find('d') != std::string::npos;
  fs.validate();
  return fs;
}

inline json to_json(const FittedModel& m) {
  return {{"feature_spec", to_json(m.features)},
          {"beta", m.beta},
          {"target", to_string(m.target)},
          {"trained_on", {m.trained_on.first, m.trained_on.last}},
          {"n_train", m.n_train}};
}

inline FittedModel model_from_json(const json& j) {
  FittedModel m;
  m.features = feature_spec_from_json(j.at("feature_spec"));
  m.beta = j.at("beta").get<std::vector<double>>();
  if (m.beta.size() != dim(m.features)) throw std::invalid_argument("model file: beta length does not match feature spec");
  const auto target = j.at("target").get<std::string>();
  if (target == "click") {
    m.target = Target::Click;
  } else if (target == "sale_given_click") {
    m.target = Target::SaleGivenClick;
  } else {
    throw std::invalid_argument("model file: unknown target '" + target + "'");
  }
  m.trained_on = {j.at("trained_on").at(0).get<int>(), j.at("trained_on").at(1).get<int>()};
  m.n_train = j.at("n_train").get<std::size_t>();
  return m;
}

inline json to_json(const Policy& p) {
  json j{{"spec", to_json(p.spec)}, {"visibility", p.visibility.str()}, {"source", p.source}, {"probs", p.probs}};
  j["epsilon"] = p.epsilon ? json(*p.epsilon) : json(nullptr);
  return j;
}

inline Policy policy_from_json(const json& j) {
  Policy p;
  p.spec = spec_from_json(j.at("spec"));
  p.visibility = CovariateSet::parse(j.at("visibility").get<std::string>());
  p.source = j.value("source", std::string());
  if (!j.at("epsilon").is_null()) p.epsilon = j.at("epsilon").get<double>();
  p.probs = j.at("probs").get<std::vector<double>>();
  p.validate();
  return p;
}

inline json to_json(const ScenarioConfig& c) {
  return {{"spec", to_json(c.spec)},       {"samples_per_day", c.samples_per_day}, {"epsilon", c.epsilon},
          {"seed", c.seed},                {"min_gap", c.min_gap},                 {"ab_start_day", c.ab_start_day},
          {"days", c.days},                {"shared_log", c.shared_log},           {"arm_b_features", c.arm_b_features.str()}};
}

inline json to_json(const Interaction& r) {
  json j{{"day", r.day}, {"x1", r.x1}, {"x2", r.x2}, {"a", r.a}, {"propensity", r.propensity}, {"c", r.click ? 1 : 0}};
  if (r.d != 0) j["d"] = r.d;
  if (r.sale) j["s"] = *r.sale ? 1 : 0;
  if (r.arm) j["arm"] = std::string(1, r.arm);
  return j;
}

/// One JSON object per line.
inline void write_ndjson(std::ostream& out, const Log& log) {
  for (const auto& r : log.records()) out << to_json(r).dump() << '\n';
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string fingerprint(const GroundTruth& gt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(gt).dump())));
  return buf;
}

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"scenario", "arm",    "day",      "samples",       "empirical_ctr", "se",
                                             "expected_ctr", "oracle_ctr", "regret", "features_used", "trained_on"};
  return cols;
}

namespace detail {

inline std::string fmt_prob(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

inline void write_header(std::ostream& out) {
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string q = "\"";
  for (char ch : field) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

}  // namespace detail

/// Per-day trajectories; columns per report_columns().
inline void write_reports_csv(std::ostream& out, const std::vector<DayReport>& reports) {
  detail::write_header(out);
  for (const auto& r : reports) {
    out << r.scenario << ',' << r.arm << ',' << r.day << ',' << r.samples << ',' << detail::fmt_prob(r.empirical_ctr) << ','
        << detail::fmt_prob(r.binomial_se) << ',' << detail::fmt_prob(r.expected_ctr) << ',' << detail::fmt_prob(r.oracle_ctr) << ','
        << detail::fmt_prob(r.regret) << ',' << detail::quote(r.features_used) << ',';
    if (r.trained_on) out << r.trained_on->first << '-' << r.trained_on->last;
    out << '\n';
  }
}

/// Policy-variant comparison in the same column set: arm holds the variant,
/// expected_ctr its exact reward; per-day sampling columns are empty.
inline void write_comparison_csv(std::ostream& out, const ComparisonReport& rep) {
  detail::write_header(out);
  for (const auto& row : rep.rows) {
    out << rep.scenario << ',' << row.variant << ",0," << rep.samples << ",,," << detail::fmt_prob(row.exact_reward) << ','
        << detail::fmt_prob(rep.oracle_reward) << ',' << detail::fmt_prob(rep.oracle_reward - row.exact_reward) << ','
        << detail::quote(row.features) << ",0-0\n";
  }
}

inline json to_json(const DayReport& r) {
  json j{{"scenario", r.scenario},     {"arm", r.arm},           {"day", r.day},
         {"samples", r.samples},       {"empirical_ctr", r.empirical_ctr}, {"se", r.binomial_se},
         {"expected_ctr", r.expected_ctr}, {"oracle_ctr", r.oracle_ctr}, {"regret", r.regret},
         {"features_used", r.features_used}};
  j["trained_on"] = r.trained_on ? json{r.trained_on->first, r.trained_on->last} : json(nullptr);
  return j;
}

inline json to_json(const ComparisonReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json row{{"variant", r.variant}, {"features", r.features}, {"exact_reward", r.exact_reward}};
    row["model_objective"] = r.model_objective ? json(*r.model_objective) : json(nullptr);
    rows.push_back(row);
  }
  return {{"scenario", rep.scenario}, {"samples", rep.samples}, {"oracle_reward", rep.oracle_reward}, {"rows", rows}};
}

}  // namespace confound
