#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "categorical.hpp"
#include "policy_table.hpp"
#include "rng.hpp"

namespace confound {

/// P(x1) and P(x2 | x1); the part of the environment a policy optimizer may use.
struct CovariateDistribution {
  CategoricalSpec spec;
  std::vector<double> p_x1;
  std::vector<double> p_x2_given_x1;  // k1 x k2, row-major

  double conditional(int x1, int x2) const {
    return p_x2_given_x1[static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)];
  }
  double joint(int x1, int x2) const { return p_x1[static_cast<std::size_t>(x1)] * conditional(x1, x2); }
};

/// Exact categorical data-generating process.
///
/// Edges: x1 -> x2, x1 -> c, x2 -> c, a -> c (and d -> c in two-decision mode),
/// plus the post-click sale mechanism when `sale_logit` is set. The action's
/// parents are never stored here; they belong to whichever Policy is deployed.
struct GroundTruth {
  CategoricalSpec spec;
  std::vector<double> p_x1;
  std::vector<double> p_x2_given_x1;
  std::vector<double> click_logit;  // k1 x k2 x joint_actions
  std::optional<std::vector<double>> sale_logit;  // k1 x k2 x n_actions
  std::uint64_t seed = 0;
  double gap = 0.0;

  std::size_t click_index(int x1, int x2, int joint_action) const {
    return (static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)) *
               static_cast<std::size_t>(spec.joint_actions()) +
           static_cast<std::size_t>(joint_action);
  }
  std::size_t sale_index(int x1, int x2, int a) const {
    return (static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)) *
               static_cast<std::size_t>(spec.n_actions) +
           static_cast<std::size_t>(a);
  }

  double conditional(int x1, int x2) const {
    return p_x2_given_x1[static_cast<std::size_t>(x1) * static_cast<std::size_t>(spec.k2) + static_cast<std::size_t>(x2)];
  }
  double joint(int x1, int x2) const { return p_x1[static_cast<std::size_t>(x1)] * conditional(x1, x2); }

  /// Click probability by flattened joint action, no bounds checks.
  double click_prob(int x1, int x2, int joint_action) const { return sigmoid(click_logit[click_index(x1, x2, joint_action)]); }

  CovariateDistribution covariates() const { return {spec, p_x1, p_x2_given_x1}; }

  void validate() const {
    spec.validate();
    const auto k1 = static_cast<std::size_t>(spec.k1);
    const auto k2 = static_cast<std::size_t>(spec.k2);
    if (p_x1.size() != k1 || p_x2_given_x1.size() != k1 * k2)
      throw std::invalid_argument("GroundTruth: covariate table shape mismatch");
    if (click_logit.size() != k1 * k2 * static_cast<std::size_t>(spec.joint_actions()))
      throw std::invalid_argument("GroundTruth: click_logit shape mismatch");
    if (sale_logit && sale_logit->size() != k1 * k2 * static_cast<std::size_t>(spec.n_actions))
      throw std::invalid_argument("GroundTruth: sale_logit shape mismatch");
    auto check_simplex = [](const double* p, std::size_t n, const char* what) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(p[i] >= 0.0)) throw std::invalid_argument(std::string("GroundTruth: negative entry in ") + what);
        total += p[i];
      }
      if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(std::string("GroundTruth: ") + what + " does not sum to 1");
    };
    check_simplex(p_x1.data(), k1, "p_x1");
    for (std::size_t r = 0; r < k1; ++r) check_simplex(p_x2_given_x1.data() + r * k2, k2, "p_x2_given_x1 row");
    for (double z : click_logit)
      if (!std::isfinite(z)) throw std::invalid_argument("GroundTruth: non-finite click logit");
    if (sale_logit)
      for (double z : *sale_logit)
        if (!std::isfinite(z)) throw std::invalid_argument("GroundTruth: non-finite sale logit");
  }
};

struct Context {
  int x1 = 0;
  int x2 = 0;
};

inline Context sample_context(const GroundTruth& gt, Stream& rng) {
  Context ctx;
  ctx.x1 = static_cast<int>(rng.categorical(gt.p_x1));
  const auto k2 = static_cast<std::size_t>(gt.spec.k2);
  ctx.x2 = static_cast<int>(rng.categorical(
      std::span<const double>(gt.p_x2_given_x1).subspan(static_cast<std::size_t>(ctx.x1) * k2, k2)));
  return ctx;
}

inline double true_click_prob(const GroundTruth& gt, int x1, int x2, int a, int d = 0) {
  check_index(x1, gt.spec.k1, "x1");
  check_index(x2, gt.spec.k2, "x2");
  check_index(a, gt.spec.n_actions, "action");
  check_index(d, gt.spec.decisions(), "decision");
  return gt.click_prob(x1, x2, a * gt.spec.decisions() + d);
}

inline double true_sale_prob(const GroundTruth& gt, int x1, int x2, int a) {
  if (!gt.sale_logit) throw std::invalid_argument("true_sale_prob: ground truth has no sale model");
  check_index(x1, gt.spec.k1, "x1");
  check_index(x2, gt.spec.k2, "x2");
  check_index(a, gt.spec.n_actions, "action");
  return sigmoid((*gt.sale_logit)[gt.sale_index(x1, x2, a)]);
}

/// P(c=1 | x1, do(a)) = sum_x2 P(x2|x1) P(c=1|x1,x2,a).
inline double interventional_ctr(const GroundTruth& gt, int x1, int joint_action) {
  double total = 0.0;
  for (int x2 = 0; x2 < gt.spec.k2; ++x2) total += gt.conditional(x1, x2) * gt.click_prob(x1, x2, joint_action);
  return total;
}

inline void check_policy_shape(const GroundTruth& gt, const Policy& p) {
  if (!(p.spec == gt.spec)) throw std::invalid_argument("policy spec does not match ground truth spec");
  if (p.probs.size() != gt.spec.contexts() * static_cast<std::size_t>(gt.spec.joint_actions()))
    throw std::invalid_argument("policy table has wrong size");
}

/// Exact CTR of a policy by enumeration over (x1, x2, joint action).
inline double expected_policy_ctr(const GroundTruth& gt, const Policy& policy) {
  check_policy_shape(gt, policy);
  double total = 0.0;
  for (int x1 = 0; x1 < gt.spec.k1; ++x1) {
    for (int x2 = 0; x2 < gt.spec.k2; ++x2) {
      const double w = gt.joint(x1, x2);
      auto row = policy.row(x1, x2);
      double inner = 0.0;
      for (int j = 0; j < gt.spec.joint_actions(); ++j) inner += row[static_cast<std::size_t>(j)] * gt.click_prob(x1, x2, j);
      total += w * inner;
    }
  }
  return total;
}

/// Exact E[c * s] (post-click sale rate) of a policy.
inline double expected_policy_sale_rate(const GroundTruth& gt, const Policy& policy) {
  if (!gt.sale_logit) throw std::invalid_argument("expected_policy_sale_rate: ground truth has no sale model");
  if (gt.spec.two_decision()) throw std::invalid_argument("expected_policy_sale_rate: not defined in two-decision mode");
  check_policy_shape(gt, policy);
  double total = 0.0;
  for (int x1 = 0; x1 < gt.spec.k1; ++x1)
    for (int x2 = 0; x2 < gt.spec.k2; ++x2)
      for (int a = 0; a < gt.spec.n_actions; ++a)
        total += gt.joint(x1, x2) * policy.prob(x1, x2, a) * gt.click_prob(x1, x2, a) *
                 sigmoid((*gt.sale_logit)[gt.sale_index(x1, x2, a)]);
  return total;
}

namespace detail {

/// Deterministic policy playing, per visible key, the joint action with the
/// largest sum of score(x1, x2, j) weighted by P(x1, x2).
template <class Score>
Policy greedy_by_visibility(const GroundTruth& gt, CovariateSet visibility, Score score, std::string source) {
  const int J = gt.spec.joint_actions();
  const std::size_t keys = visibility.cardinality(gt.spec);
  std::vector<double> totals(keys * static_cast<std::size_t>(J), 0.0);
  for (int x1 = 0; x1 < gt.spec.k1; ++x1)
    for (int x2 = 0; x2 < gt.spec.k2; ++x2) {
      const std::size_t key = visibility.key(gt.spec, x1, x2);
      const double w = gt.joint(x1, x2);
      for (int j = 0; j < J; ++j) totals[key * static_cast<std::size_t>(J) + static_cast<std::size_t>(j)] += w * score(x1, x2, j);
    }
  Policy p{gt.spec, std::vector<double>(gt.spec.contexts() * static_cast<std::size_t>(J), 0.0), visibility, 0.0, std::move(source)};
  for (int x1 = 0; x1 < gt.spec.k1; ++x1)
    for (int x2 = 0; x2 < gt.spec.k2; ++x2) {
      const std::size_t key = visibility.key(gt.spec, x1, x2);
      const std::size_t best =
          argmax(std::span<const double>(totals).subspan(key * static_cast<std::size_t>(J), static_cast<std::size_t>(J)));
      p.row(x1, x2)[best] = 1.0;
    }
  return p;
}

}  // namespace detail

/// Best deterministic policy among those that only see `visibility`.
/// For x1-only visibility this maximizes sum_x2 P(x2|x1) sigma(logit) per x1.
inline Policy oracle_policy(const GroundTruth& gt, CovariateSet visibility) {
  return detail::greedy_by_visibility(
      gt, visibility, [&](int x1, int x2, int j) { return gt.click_prob(x1, x2, j); }, "oracle:" + visibility.str());
}

/// Best deterministic policy for E[c * s] given full context.
inline Policy oracle_sale_policy(const GroundTruth& gt) {
  if (!gt.sale_logit) throw std::invalid_argument("oracle_sale_policy: ground truth has no sale model");
  return detail::greedy_by_visibility(
      gt, CovariateSet::both(),
      [&](int x1, int x2, int a) { return gt.click_prob(x1, x2, a) * sigmoid((*gt.sale_logit)[gt.sale_index(x1, x2, a)]); },
      "oracle:sale");
}

struct ConfoundingGapEntry {
  int x1 = 0;
  int oracle_action = 0;      ///< argmax of the interventional CTR
  int confounded_action = 0;  ///< argmax of the x1-only regression limit on an x2-aware log
  double gap = 0.0;           ///< interventional CTR lost by playing the confounded action
};

struct ConfoundingGapReport {
  std::vector<ConfoundingGapEntry> per_x1;
  double weighted_gap = 0.0;  ///< sum over x1 of P(x1) * gap
  double max_gap = 0.0;
};

/// Large-sample effect of fitting an x1-only click model on a log collected by
/// the epsilon-greedy x2-aware oracle policy.
///
/// The x1-only MLE converges to sum_x2 Q(x2|x1,a) sigma(.), where
/// Q(x2|x1,a) is proportional to P(x2|x1) pi(a|x1,x2); its argmax is compared
/// against the argmax of the interventional CTR.
inline ConfoundingGapReport confounding_gap_report(const GroundTruth& gt, double logging_epsilon = 0.05) {
  const int J = gt.spec.joint_actions();
  const Policy greedy = oracle_policy(gt, CovariateSet::both());
  ConfoundingGapReport report;
  std::vector<double> causal(static_cast<std::size_t>(J));
  std::vector<double> confounded(static_cast<std::size_t>(J));
  for (int x1 = 0; x1 < gt.spec.k1; ++x1) {
    for (int j = 0; j < J; ++j) {
      double num = 0.0;
      double den = 0.0;
      for (int x2 = 0; x2 < gt.spec.k2; ++x2) {
        const double pi = (1.0 - logging_epsilon) * greedy.prob(x1, x2, j) + logging_epsilon / J;
        const double w = gt.conditional(x1, x2) * pi;
        num += w * gt.click_prob(x1, x2, j);
        den += w;
      }
      causal[static_cast<std::size_t>(j)] = interventional_ctr(gt, x1, j);
      // Actions never logged in this stratum have no estimate; the fitted model
      // cannot prefer them.
      confounded[static_cast<std::size_t>(j)] = den > 0.0 ? num / den : -1.0;
    }
    ConfoundingGapEntry e;
    e.x1 = x1;
    e.oracle_action = static_cast<int>(argmax(causal));
    e.confounded_action = static_cast<int>(argmax(confounded));
    e.gap = causal[static_cast<std::size_t>(e.oracle_action)] - causal[static_cast<std::size_t>(e.confounded_action)];
    report.weighted_gap += gt.p_x1[static_cast<std::size_t>(x1)] * e.gap;
    report.max_gap = std::max(report.max_gap, e.gap);
    report.per_x1.push_back(e);
  }
  return report;
}

/// P(x1)-weighted interventional CTR lost through confounding (see confounding_gap_report).
inline double confounding_gap(const GroundTruth& gt, double logging_epsilon = 0.05) {
  return confounding_gap_report(gt, logging_epsilon).weighted_gap;
}

struct GroundTruthOptions {
  double logit_bound = 2.0;
  int max_rounds = 1000;
  bool with_sale = false;
  double logging_epsilon = 0.05;
};

namespace detail {

inline std::vector<double> dirichlet_ones(Stream& rng, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& x : v) total += (x = rng.exponential());
  for (auto& x : v) x /= total;
  return v;
}

inline GroundTruth draw_ground_truth(const CategoricalSpec& spec, Stream& rng, const GroundTruthOptions& opts) {
  GroundTruth gt;
  gt.spec = spec;
  gt.p_x1 = dirichlet_ones(rng, spec.k1);
  for (int r = 0; r < spec.k1; ++r) {
    auto row = dirichlet_ones(rng, spec.k2);
    gt.p_x2_given_x1.insert(gt.p_x2_given_x1.end(), row.begin(), row.end());
  }
  gt.click_logit.resize(spec.contexts() * static_cast<std::size_t>(spec.joint_actions()));
  for (auto& z : gt.click_logit) z = opts.logit_bound * (2.0 * rng.uniform() - 1.0);
  if (opts.with_sale) {
    std::vector<double> sale(spec.contexts() * static_cast<std::size_t>(spec.n_actions));
    for (auto& z : sale) z = opts.logit_bound * (2.0 * rng.uniform() - 1.0);
    gt.sale_logit = std::move(sale);
  }
  return gt;
}

}  // namespace detail

/// Seeded random environment, redrawn until its confounding gap reaches `min_gap`.
///
/// Logits are i.i.d. uniform on [-logit_bound, logit_bound]; P(x1) and each
/// row of P(x2|x1) are Dirichlet(1). Round r draws from an independent stream
/// derived from (seed, r), so the result depends only on the arguments.
inline GroundTruth make_default_ground_truth(const CategoricalSpec& spec, std::uint64_t seed, double min_gap,
                                             const GroundTruthOptions& opts = {}) {
  spec.validate();
  if (!(min_gap >= 0.0 && min_gap <= 0.2)) throw std::invalid_argument("make_default_ground_truth: min_gap must lie in [0, 0.2]");
  double best = -1.0;
  for (int round = 0; round < opts.max_rounds; ++round) {
    Stream rng(derive_seed(seed, {0x67742d64726177ULL, static_cast<std::uint64_t>(round)}));
    GroundTruth gt = detail::draw_ground_truth(spec, rng, opts);
    gt.seed = seed;
    gt.gap = confounding_gap(gt, opts.logging_epsilon);
    if (gt.gap >= min_gap) return gt;
    best = std::max(best, gt.gap);
  }
  std::ostringstream msg;
  msg << "make_default_ground_truth: no environment with confounding gap >= " << min_gap << " after " << opts.max_rounds
      << " rounds (seed " << seed << ", best gap " << best << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace confound
