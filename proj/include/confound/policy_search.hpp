#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "environment.hpp"
#include "glm.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace confound {

enum class Baseline { None, RunningMean };

struct SearchConfig {
  double learning_rate = 20.0;
  int iterations = 2000;
  int batch_size = 1024;
  Baseline baseline = Baseline::RunningMean;
  std::uint64_t seed = 0;
};

/// Gradient with respect to (xi, gamma), laid out like FactoredPolicyParams.
struct FactoredGradient {
  std::vector<double> xi;
  std::vector<double> gamma;

  double norm() const {
    double s = 0.0;
    for (double v : xi) s += v * v;
    for (double v : gamma) s += v * v;
    return std::sqrt(s);
  }
};

namespace detail {

inline void check_search_inputs(const FittedModel& joint_model, const CategoricalSpec& spec, const CovariateDistribution& cov) {
  if (!spec.two_decision()) throw std::invalid_argument("policy search requires two-decision mode");
  if (!(joint_model.features.spec == spec) || !(cov.spec == spec))
    throw std::invalid_argument("policy search: model, policy and covariate specs differ");
  if (!joint_model.features.factors.a || !joint_model.features.factors.d)
    throw std::invalid_argument("policy search: joint model must cover both a and d");
}

/// Model click probability for every (x1, x2, a, d), flattened like GroundTruth::click_logit.
inline std::vector<double> reward_table(const FittedModel& m, const CategoricalSpec& s) {
  std::vector<double> r;
  r.reserve(s.contexts() * static_cast<std::size_t>(s.joint_actions()));
  for (int x1 = 0; x1 < s.k1; ++x1)
    for (int x2 = 0; x2 < s.k2; ++x2)
      for (int a = 0; a < s.n_actions; ++a)
        for (int d = 0; d < s.decisions(); ++d) r.push_back(m.predict(x1, x2, a, d));
  return r;
}

}  // namespace detail

/// E_{x ~ P, a ~ pi(a|x'), d ~ pi(d|x'')} P_model(c=1 | a, d, x) by enumeration.
inline double exact_objective(const FittedModel& joint_model, const FactoredPolicy& t, const CovariateDistribution& cov) {
  detail::check_search_inputs(joint_model, t.spec, cov);
  const auto& s = t.spec;
  double total = 0.0;
  for (int x1 = 0; x1 < s.k1; ++x1)
    for (int x2 = 0; x2 < s.k2; ++x2) {
      double inner = 0.0;
      for (int a = 0; a < s.n_actions; ++a)
        for (int d = 0; d < s.decisions(); ++d)
          inner += t.action_prob(x1, x2, a) * t.decision_prob(x1, x2, d) * joint_model.predict(x1, x2, a, d);
      total += cov.joint(x1, x2) * inner;
    }
  return total;
}

inline double exact_objective(const FittedModel& joint_model, const FactoredPolicyParams& fp, const CovariateDistribution& cov) {
  return exact_objective(joint_model, factor_tables(fp), cov);
}

/// Analytic gradient of exact_objective through both softmax factors.
inline FactoredGradient exact_gradient(const FittedModel& joint_model, const FactoredPolicyParams& fp,
                                       const CovariateDistribution& cov) {
  const FactoredPolicy t = factor_tables(fp);
  detail::check_search_inputs(joint_model, t.spec, cov);
  const auto& s = t.spec;
  const int A = s.n_actions;
  const int D = s.decisions();
  const auto reward = detail::reward_table(joint_model, s);
  FactoredGradient g{std::vector<double>(fp.xi.size(), 0.0), std::vector<double>(fp.gamma.size(), 0.0)};
  std::vector<double> q_action(static_cast<std::size_t>(A));
  std::vector<double> q_decision(static_cast<std::size_t>(D));
  for (int x1 = 0; x1 < s.k1; ++x1)
    for (int x2 = 0; x2 < s.k2; ++x2) {
      const double w = cov.joint(x1, x2);
      if (w == 0.0) continue;
      const double* r = reward.data() + (static_cast<std::size_t>(x1) * static_cast<std::size_t>(s.k2) + static_cast<std::size_t>(x2)) *
                                            static_cast<std::size_t>(A * D);
      // q_action[a] = E_d r(a, d); q_decision[d] = E_a r(a, d)
      std::fill(q_action.begin(), q_action.end(), 0.0);
      std::fill(q_decision.begin(), q_decision.end(), 0.0);
      double value = 0.0;
      for (int a = 0; a < A; ++a)
        for (int d = 0; d < D; ++d) {
          const double pa = t.action_prob(x1, x2, a);
          const double pd = t.decision_prob(x1, x2, d);
          const double v = r[a * D + d];
          q_action[static_cast<std::size_t>(a)] += pd * v;
          q_decision[static_cast<std::size_t>(d)] += pa * v;
          value += pa * pd * v;
        }
      const std::size_t ka = t.action_view.key(s, x1, x2) * static_cast<std::size_t>(A);
      const std::size_t kd = t.decision_view.key(s, x1, x2) * static_cast<std::size_t>(D);
      for (int a = 0; a < A; ++a)
        g.xi[ka + static_cast<std::size_t>(a)] += w * t.action_prob(x1, x2, a) * (q_action[static_cast<std::size_t>(a)] - value);
      for (int d = 0; d < D; ++d)
        g.gamma[kd + static_cast<std::size_t>(d)] += w * t.decision_prob(x1, x2, d) * (q_decision[static_cast<std::size_t>(d)] - value);
    }
  return g;
}

/// Draws (x, a, d) from the covariates and a factored policy, returning the
/// model reward and accumulating (reward - baseline) * grad log pi into `out`
/// scaled by `weight`.
class ScoreFunctionSampler {
 public:
  ScoreFunctionSampler(const FittedModel& joint_model, const FactoredPolicy& tables, const CovariateDistribution& cov)
      : tables_(tables), reward_(detail::reward_table(joint_model, tables.spec)) {
    detail::check_search_inputs(joint_model, tables.spec, cov);
    const auto& s = tables.spec;
    cdf_x1_ = make_cdf(cov.p_x1);
    for (int x1 = 0; x1 < s.k1; ++x1)
      cdf_x2_.push_back(make_cdf(std::span<const double>(cov.p_x2_given_x1).subspan(static_cast<std::size_t>(x1 * s.k2), static_cast<std::size_t>(s.k2))));
    const auto A = static_cast<std::size_t>(s.n_actions);
    const auto D = static_cast<std::size_t>(s.decisions());
    for (std::size_t k = 0; k * A < tables.action_probs.size(); ++k)
      cdf_a_.push_back(make_cdf(std::span<const double>(tables.action_probs).subspan(k * A, A)));
    for (std::size_t k = 0; k * D < tables.decision_probs.size(); ++k)
      cdf_d_.push_back(make_cdf(std::span<const double>(tables.decision_probs).subspan(k * D, D)));
  }

  double sample(Stream& rng, double baseline, double weight, FactoredGradient& out) const {
    const auto& s = tables_.spec;
    const int A = s.n_actions;
    const int D = s.decisions();
    const int x1 = static_cast<int>(rng.from_cdf(cdf_x1_));
    const int x2 = static_cast<int>(rng.from_cdf(cdf_x2_[static_cast<std::size_t>(x1)]));
    const std::size_t ka = tables_.action_view.key(s, x1, x2);
    const std::size_t kd = tables_.decision_view.key(s, x1, x2);
    const int a = static_cast<int>(rng.from_cdf(cdf_a_[ka]));
    const int d = static_cast<int>(rng.from_cdf(cdf_d_[kd]));
    const double r =
        reward_[(static_cast<std::size_t>(x1) * static_cast<std::size_t>(s.k2) + static_cast<std::size_t>(x2)) * static_cast<std::size_t>(A * D) +
                static_cast<std::size_t>(a * D + d)];
    const double adv = weight * (r - baseline);
    for (int b = 0; b < A; ++b)
      out.xi[ka * static_cast<std::size_t>(A) + static_cast<std::size_t>(b)] +=
          adv * ((b == a ? 1.0 : 0.0) - tables_.action_probs[ka * static_cast<std::size_t>(A) + static_cast<std::size_t>(b)]);
    for (int e = 0; e < D; ++e)
      out.gamma[kd * static_cast<std::size_t>(D) + static_cast<std::size_t>(e)] +=
          adv * ((e == d ? 1.0 : 0.0) - tables_.decision_probs[kd * static_cast<std::size_t>(D) + static_cast<std::size_t>(e)]);
    return r;
  }

 private:
  FactoredPolicy tables_;
  std::vector<double> reward_;
  std::vector<double> cdf_x1_;
  std::vector<std::vector<double>> cdf_x2_;
  std::vector<std::vector<double>> cdf_a_;
  std::vector<std::vector<double>> cdf_d_;
};

struct SearchTracePoint {
  int iteration = 0;
  double exact_objective = 0.0;
  double gradient_norm = 0.0;  ///< norm of the stochastic batch gradient
};

using SearchTraceSink = std::function<void(const SearchTracePoint&)>;

/// Score-function gradient ascent on a factored policy.
///
/// Each iteration draws `batch_size` contexts and actions, scores them with the
/// joint model's click probability and steps along the batch mean of
/// (reward - baseline) * grad log pi. The running-mean baseline uses only
/// rewards from earlier batches. Throws if a parameter becomes non-finite.
inline FactoredPolicyParams reinforce_optimize(const FittedModel& joint_model, const FactoredPolicyParams& init,
                                               const SearchConfig& cfg, const CovariateDistribution& cov,
                                               const SearchTraceSink& trace = {}) {
  init.validate();
  if (!(cfg.learning_rate >= 0.0) || cfg.iterations < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("reinforce_optimize: invalid search configuration");
  detail::check_search_inputs(joint_model, init.spec, cov);
  FactoredPolicyParams params = init;
  Stream rng(derive_seed(cfg.seed, {0x7265696e66ULL}));
  double reward_sum = 0.0;
  double reward_count = 0.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const FactoredPolicy tables = factor_tables(params);
    const ScoreFunctionSampler sampler(joint_model, tables, cov);
    const double baseline = (cfg.baseline == Baseline::RunningMean && reward_count > 0) ? reward_sum / reward_count : 0.0;
    FactoredGradient g{std::vector<double>(params.xi.size(), 0.0), std::vector<double>(params.gamma.size(), 0.0)};
    const double weight = 1.0 / cfg.batch_size;
    for (int i = 0; i < cfg.batch_size; ++i) {
      reward_sum += sampler.sample(rng, baseline, weight, g);
      reward_count += 1.0;
    }
    for (std::size_t i = 0; i < params.xi.size(); ++i) params.xi[i] += cfg.learning_rate * g.xi[i];
    for (std::size_t i = 0; i < params.gamma.size(); ++i) params.gamma[i] += cfg.learning_rate * g.gamma[i];
    for (double v : params.xi)
      if (!std::isfinite(v)) throw std::runtime_error("reinforce_optimize: diverged at iteration " + std::to_string(it));
    for (double v : params.gamma)
      if (!std::isfinite(v)) throw std::runtime_error("reinforce_optimize: diverged at iteration " + std::to_string(it));
    if (trace) trace({it, exact_objective(joint_model, params, cov), g.norm()});
  }
  return params;
}

}  // namespace confound
