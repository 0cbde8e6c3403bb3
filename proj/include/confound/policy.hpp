#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "glm.hpp"
#include "policy_table.hpp"
#include "rng.hpp"

namespace confound {

/// pi0(a | x1, x2) = 1 / (number of joint actions).
inline Policy uniform_policy(const CategoricalSpec& spec) {
  spec.validate();
  const int J = spec.joint_actions();
  return {spec, std::vector<double>(spec.contexts() * static_cast<std::size_t>(J), 1.0 / J), CovariateSet::none(), 1.0, "uniform"};
}

namespace detail {

inline void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
}

inline void check_model_covers_actions(const FittedModel& m, const CategoricalSpec& spec) {
  if (!(m.features.spec == spec)) throw std::invalid_argument("model spec does not match policy spec");
  if (!m.features.factors.a || m.features.factors.d != spec.two_decision())
    throw std::invalid_argument("model action factors do not cover the joint action space");
}

/// Fills every row with (1 - eps) on the lowest-index argmax of score plus eps / J.
template <class Score>
Policy epsilon_greedy_by(const CategoricalSpec& spec, CovariateSet visibility, double epsilon, Score score, std::string source) {
  const int J = spec.joint_actions();
  Policy p{spec, std::vector<double>(spec.contexts() * static_cast<std::size_t>(J)), visibility, epsilon, std::move(source)};
  std::vector<double> values(static_cast<std::size_t>(J));
  const double floor = epsilon / J;
  for (int x1 = 0; x1 < spec.k1; ++x1)
    for (int x2 = 0; x2 < spec.k2; ++x2) {
      for (int j = 0; j < J; ++j) values[static_cast<std::size_t>(j)] = score(x1, x2, j);
      const std::size_t best = argmax(values);
      auto row = p.row(x1, x2);
      for (int j = 0; j < J; ++j) row[static_cast<std::size_t>(j)] = floor;
      row[best] = (1.0 - epsilon) + floor;
    }
  return p;
}

}  // namespace detail

/// pi(a | x) = (1 - eps) 1{a = argmax_a' P_m(c=1 | x, a')} + eps / A.
///
/// The policy sees exactly the covariates in the model's feature spec.
inline Policy epsilon_greedy(const FittedModel& m, double epsilon, const CategoricalSpec& spec) {
  detail::check_epsilon(epsilon);
  detail::check_model_covers_actions(m, spec);
  const int D = spec.decisions();
  return detail::epsilon_greedy_by(
      spec, m.features.included, epsilon, [&](int x1, int x2, int j) { return m.beta[encode(m.features, x1, x2, j / D, j % D)]; },
      "eps_greedy:" + m.features.str() + "@" + std::to_string(m.trained_on.first) + "-" + std::to_string(m.trained_on.last));
}

/// Epsilon-greedy on the product P(s=1 | a, x', c=1) P(c=1 | a, x'') of two separately fitted models.
inline Policy product_epsilon_greedy(const FittedModel& sale_model, const FittedModel& click_model, double epsilon,
                                     const CategoricalSpec& spec) {
  detail::check_epsilon(epsilon);
  if (spec.two_decision()) throw std::invalid_argument("product_epsilon_greedy: not defined in two-decision mode");
  detail::check_model_covers_actions(sale_model, spec);
  detail::check_model_covers_actions(click_model, spec);
  if (sale_model.target != Target::SaleGivenClick || click_model.target != Target::Click)
    throw std::invalid_argument("product_epsilon_greedy: expected (sale-given-click, click) models");
  return detail::epsilon_greedy_by(
      spec, sale_model.features.included | click_model.features.included, epsilon,
      [&](int x1, int x2, int a) { return sale_model.predict(x1, x2, a) * click_model.predict(x1, x2, a); },
      "product:" + sale_model.features.included.str() + "|" + click_model.features.included.str());
}

struct ActionDraw {
  int a = 0;
  int d = 0;
  double propensity = 1.0;
};

inline ActionDraw sample_action(const Policy& p, int x1, int x2, Stream& rng) {
  check_index(x1, p.spec.k1, "x1");
  check_index(x2, p.spec.k2, "x2");
  const auto row = p.row(x1, x2);
  const auto j = static_cast<int>(rng.categorical(row));
  const int D = p.spec.decisions();
  return {j / D, j % D, row[static_cast<std::size_t>(j)]};
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double hi = logits[0];
  for (double z : logits) hi = std::max(hi, z);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp(logits[i] - hi));
  for (auto& v : out) v /= total;
  return out;
}

/// Probability tables of a factored two-decision policy pi(a | x') pi(d | x'').
struct FactoredPolicy {
  CategoricalSpec spec;
  CovariateSet action_view;    ///< x'
  CovariateSet decision_view;  ///< x''
  std::vector<double> action_probs;    ///< keys(x') x A
  std::vector<double> decision_probs;  ///< keys(x'') x D

  double action_prob(int x1, int x2, int a) const {
    return action_probs[action_view.key(spec, x1, x2) * static_cast<std::size_t>(spec.n_actions) + static_cast<std::size_t>(a)];
  }
  double decision_prob(int x1, int x2, int d) const {
    return decision_probs[decision_view.key(spec, x1, x2) * static_cast<std::size_t>(spec.decisions()) + static_cast<std::size_t>(d)];
  }
};

/// Softmax logits of a factored policy: xi for pi_Xi(a | x'), gamma for pi_Gamma(d | x'').
struct FactoredPolicyParams {
  CategoricalSpec spec;
  CovariateSet action_view;
  CovariateSet decision_view;
  std::vector<double> xi;
  std::vector<double> gamma;

  static FactoredPolicyParams zeros(const CategoricalSpec& spec, CovariateSet action_view, CovariateSet decision_view) {
    if (!spec.two_decision()) throw std::invalid_argument("FactoredPolicyParams: requires two-decision mode");
    return {spec, action_view, decision_view,
            std::vector<double>(action_view.cardinality(spec) * static_cast<std::size_t>(spec.n_actions), 0.0),
            std::vector<double>(decision_view.cardinality(spec) * static_cast<std::size_t>(spec.decisions()), 0.0)};
  }

  void validate() const {
    if (!spec.two_decision()) throw std::invalid_argument("FactoredPolicyParams: requires two-decision mode");
    if (xi.size() != action_view.cardinality(spec) * static_cast<std::size_t>(spec.n_actions) ||
        gamma.size() != decision_view.cardinality(spec) * static_cast<std::size_t>(spec.decisions()))
      throw std::invalid_argument("FactoredPolicyParams: logit table shape mismatch");
    for (double v : xi)
      if (!std::isfinite(v)) throw std::invalid_argument("FactoredPolicyParams: non-finite logit");
    for (double v : gamma)
      if (!std::isfinite(v)) throw std::invalid_argument("FactoredPolicyParams: non-finite logit");
  }
};

inline FactoredPolicy factor_tables(const FactoredPolicyParams& fp) {
  fp.validate();
  FactoredPolicy t{fp.spec, fp.action_view, fp.decision_view, {}, {}};
  const auto A = static_cast<std::size_t>(fp.spec.n_actions);
  const auto D = static_cast<std::size_t>(fp.spec.decisions());
  for (std::size_t k = 0; k * A < fp.xi.size(); ++k) {
    auto row = softmax(std::span<const double>(fp.xi).subspan(k * A, A));
    t.action_probs.insert(t.action_probs.end(), row.begin(), row.end());
  }
  for (std::size_t k = 0; k * D < fp.gamma.size(); ++k) {
    auto row = softmax(std::span<const double>(fp.gamma).subspan(k * D, D));
    t.decision_probs.insert(t.decision_probs.end(), row.begin(), row.end());
  }
  return t;
}

/// Deterministic factored policy playing each factor's most likely choice.
inline FactoredPolicy mode_tables(const FactoredPolicyParams& fp) {
  fp.validate();
  FactoredPolicy t{fp.spec, fp.action_view, fp.decision_view, std::vector<double>(fp.xi.size(), 0.0),
                   std::vector<double>(fp.gamma.size(), 0.0)};
  const auto A = static_cast<std::size_t>(fp.spec.n_actions);
  const auto D = static_cast<std::size_t>(fp.spec.decisions());
  for (std::size_t k = 0; k * A < fp.xi.size(); ++k) t.action_probs[k * A + argmax(std::span<const double>(fp.xi).subspan(k * A, A))] = 1.0;
  for (std::size_t k = 0; k * D < fp.gamma.size(); ++k)
    t.decision_probs[k * D + argmax(std::span<const double>(fp.gamma).subspan(k * D, D))] = 1.0;
  return t;
}

/// Outer product pi(a | x') pi(d | x'') per context, as a joint Policy.
inline Policy to_joint(const FactoredPolicy& t) {
  const int A = t.spec.n_actions;
  const int D = t.spec.decisions();
  Policy p{t.spec, std::vector<double>(t.spec.contexts() * static_cast<std::size_t>(A * D)), t.action_view | t.decision_view,
           std::nullopt, "factored:" + t.action_view.str() + "|" + t.decision_view.str()};
  for (int x1 = 0; x1 < t.spec.k1; ++x1)
    for (int x2 = 0; x2 < t.spec.k2; ++x2) {
      auto row = p.row(x1, x2);
      for (int a = 0; a < A; ++a)
        for (int d = 0; d < D; ++d)
          row[static_cast<std::size_t>(a * D + d)] = t.action_prob(x1, x2, a) * t.decision_prob(x1, x2, d);
    }
  return p;
}

inline Policy to_joint(const FactoredPolicyParams& fp) { return to_joint(factor_tables(fp)); }

}  // namespace confound
