// Hand-built environments and brute-force enumerations shared by the tests.
#pragma once

#include <confound/confound.hpp>

#include <cmath>
#include <vector>

namespace fixture {

using namespace confound;

/// Seeds used wherever a test needs "the repo fixture" environment.
inline const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

/// Seeds whose 400k-sample scenarios show the day-by-day shape the scenario
/// tests assert (x2-aware day at least as good, confounded dip of at least
/// min_gap * (1 - epsilon), shared-log arm below separate-log arm on every
/// post-split day).
inline const std::vector<std::uint64_t> kScenarioSeeds{2, 3, 5, 6};

inline double logit_of(double p) { return std::log(p / (1.0 - p)); }

/// Two x1 states, but all mass on x1 = 0, so it behaves like a single-x1 instance
/// (the categorical spec requires k1 >= 2).
///   P(x2 | x1=0) = (0.8, 0.2)
///   click:  x2=0: a0 0.6, a1 0.2     x2=1: a0 0.5, a1 0.95
/// Action 0 is best for x2=0, action 1 for x2=1, action 0 is best on average.
inline GroundTruth hand_instance() {
  GroundTruth gt;
  gt.spec = CategoricalSpec{2, 2, 2, std::nullopt};
  gt.p_x1 = {1.0, 0.0};
  gt.p_x2_given_x1 = {0.8, 0.2, 0.5, 0.5};
  const double p[2][2] = {{0.6, 0.2}, {0.5, 0.95}};
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int a = 0; a < 2; ++a) gt.click_logit.push_back(logit_of(p[x2][a]));
  return gt;
}

/// A random environment whose click logits ignore x2.
inline GroundTruth x2_irrelevant(std::uint64_t seed, const CategoricalSpec& spec = {}) {
  GroundTruth gt = make_default_ground_truth(spec, seed, 0.0);
  const int J = spec.joint_actions();
  for (int x1 = 0; x1 < spec.k1; ++x1)
    for (int x2 = 1; x2 < spec.k2; ++x2)
      for (int j = 0; j < J; ++j) gt.click_logit[gt.click_index(x1, x2, j)] = gt.click_logit[gt.click_index(x1, 0, j)];
  return gt;
}

/// Brute-force confounding gap: builds the full observational joint
/// P(x1, x2, a, c) under the epsilon-greedy full-information oracle, reads off
/// P(c=1 | x1, a) and P(c=1 | x1, do(a)) by summation, and compares argmaxes.
inline double enumerated_gap(const GroundTruth& gt, double eps) {
  const auto& s = gt.spec;
  const int A = s.n_actions;
  double gap = 0.0;
  for (int x1 = 0; x1 < s.k1; ++x1) {
    // Full-information greedy choice per x2, recomputed from scratch.
    std::vector<double> joint_c1(static_cast<std::size_t>(A), 0.0), joint_a(static_cast<std::size_t>(A), 0.0),
        causal(static_cast<std::size_t>(A), 0.0);
    for (int x2 = 0; x2 < s.k2; ++x2) {
      int best = 0;
      for (int a = 1; a < A; ++a)
        if (1.0 / (1.0 + std::exp(-gt.click_logit[gt.click_index(x1, x2, a)])) >
            1.0 / (1.0 + std::exp(-gt.click_logit[gt.click_index(x1, x2, best)])))
          best = a;
      const double px2 = gt.p_x2_given_x1[static_cast<std::size_t>(x1 * s.k2 + x2)];
      for (int a = 0; a < A; ++a) {
        const double pa = (a == best ? 1.0 - eps : 0.0) + eps / A;
        const double pc = 1.0 / (1.0 + std::exp(-gt.click_logit[gt.click_index(x1, x2, a)]));
        joint_a[static_cast<std::size_t>(a)] += px2 * pa;
        joint_c1[static_cast<std::size_t>(a)] += px2 * pa * pc;
        causal[static_cast<std::size_t>(a)] += px2 * pc;
      }
    }
    int a_star = 0, a_conf = 0;
    for (int a = 1; a < A; ++a) {
      if (causal[static_cast<std::size_t>(a)] > causal[static_cast<std::size_t>(a_star)]) a_star = a;
      const double obs = joint_a[static_cast<std::size_t>(a)] > 0 ? joint_c1[static_cast<std::size_t>(a)] / joint_a[static_cast<std::size_t>(a)] : -1;
      const double cur = joint_a[static_cast<std::size_t>(a_conf)] > 0
                             ? joint_c1[static_cast<std::size_t>(a_conf)] / joint_a[static_cast<std::size_t>(a_conf)]
                             : -1;
      if (obs > cur) a_conf = a;
    }
    gap += gt.p_x1[static_cast<std::size_t>(x1)] * (causal[static_cast<std::size_t>(a_star)] - causal[static_cast<std::size_t>(a_conf)]);
  }
  return gap;
}

/// Exact CTR of a policy table by direct summation.
inline double enumerated_ctr(const GroundTruth& gt, const Policy& p) {
  double total = 0.0;
  for (int x1 = 0; x1 < gt.spec.k1; ++x1)
    for (int x2 = 0; x2 < gt.spec.k2; ++x2)
      for (int j = 0; j < gt.spec.joint_actions(); ++j)
        total += gt.p_x1[static_cast<std::size_t>(x1)] * gt.p_x2_given_x1[static_cast<std::size_t>(x1 * gt.spec.k2 + x2)] *
                 p.probs[static_cast<std::size_t>((x1 * gt.spec.k2 + x2) * gt.spec.joint_actions() + j)] *
                 (1.0 / (1.0 + std::exp(-gt.click_logit[gt.click_index(x1, x2, j)])));
  return total;
}

/// Log of explicit (x1, x2, a, click) records.
inline Log make_log(const CategoricalSpec& spec, const std::vector<Interaction>& records) {
  Log log(spec);
  log.append(records);
  return log;
}

/// n records in one cell, the first `clicks` of them clicked.
inline void add_cell(std::vector<Interaction>& out, int x1, int x2, int a, int n, int clicks, int day = 0) {
  for (int i = 0; i < n; ++i) {
    Interaction r;
    r.day = day;
    r.x1 = x1;
    r.x2 = x2;
    r.a = a;
    r.click = i < clicks;
    out.push_back(r);
  }
}

/// Sale depends only on x1 and clicks only on x2, with clear margins and
/// uniform covariates so every cell is well sampled.
inline GroundTruth separable_click_sale() {
  GroundTruthOptions opts;
  opts.with_sale = true;
  GroundTruth gt = make_default_ground_truth({}, 31, 0.0, opts);
  const auto k1 = static_cast<std::size_t>(gt.spec.k1), k2 = static_cast<std::size_t>(gt.spec.k2);
  gt.p_x1.assign(k1, 1.0 / static_cast<double>(k1));
  gt.p_x2_given_x1.assign(k1 * k2, 1.0 / static_cast<double>(k2));
  for (int x1 = 0; x1 < gt.spec.k1; ++x1)
    for (int x2 = 0; x2 < gt.spec.k2; ++x2)
      for (int a = 0; a < gt.spec.n_actions; ++a) {
        gt.click_logit[gt.click_index(x1, x2, a)] = a == x2 ? 1.0 : -1.0;
        (*gt.sale_logit)[gt.sale_index(x1, x2, a)] = a == x1 ? 0.5 : -0.5;
      }
  return gt;
}

}  // namespace fixture
