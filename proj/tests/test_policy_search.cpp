#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <limits>
#include <random>

using namespace confound;

namespace {

FittedModel random_joint_model(const CategoricalSpec& s, std::uint32_t seed) {
  FittedModel m = zero_model({s, CovariateSet::both(), {true, true}});
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  for (auto& b : m.beta) b = u(rng);
  return m;
}

CovariateDistribution random_cov(const CategoricalSpec& s, std::uint64_t seed) {
  return make_default_ground_truth(s, seed, 0.0).covariates();
}

FactoredPolicyParams random_params(const CategoricalSpec& s, CovariateSet av, CovariateSet dv, std::uint32_t seed) {
  FactoredPolicyParams fp = FactoredPolicyParams::zeros(s, av, dv);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (auto& v : fp.xi) v = u(rng);
  for (auto& v : fp.gamma) v = u(rng);
  return fp;
}

/// Exhaustive best deterministic factored policy value under a joint model.
double best_deterministic(const FittedModel& m, const CategoricalSpec& s, CovariateSet av, CovariateSet dv,
                          const CovariateDistribution& cov) {
  const std::size_t ka = av.cardinality(s), kd = dv.cardinality(s);
  const std::size_t A = static_cast<std::size_t>(s.n_actions), D = static_cast<std::size_t>(s.decisions());
  std::size_t combos_a = 1, combos_d = 1;
  for (std::size_t i = 0; i < ka; ++i) combos_a *= A;
  for (std::size_t i = 0; i < kd; ++i) combos_d *= D;
  double best = -1.0;
  for (std::size_t ca = 0; ca < combos_a; ++ca)
    for (std::size_t cd = 0; cd < combos_d; ++cd) {
      FactoredPolicy t{s, av, dv, std::vector<double>(ka * A, 0.0), std::vector<double>(kd * D, 0.0)};
      std::size_t r = ca;
      for (std::size_t k = 0; k < ka; ++k, r /= A) t.action_probs[k * A + r % A] = 1.0;
      r = cd;
      for (std::size_t k = 0; k < kd; ++k, r /= D) t.decision_probs[k * D + r % D] = 1.0;
      best = std::max(best, exact_objective(m, t, cov));
    }
  return best;
}

}  // namespace

TEST(ExactObjective, UniformPolicyZeroModelIsHalf) {
  const CategoricalSpec s{5, 5, 10, 3};
  const FittedModel m = zero_model({s, CovariateSet::both(), {true, true}});
  EXPECT_NEAR(exact_objective(m, FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only()), random_cov(s, 1)), 0.5,
              1e-15);
}

TEST(ExactObjective, PointMassesGiveSinglePrediction) {
  const CategoricalSpec s{3, 3, 4, 2};
  const FittedModel m = random_joint_model(s, 2);
  CovariateDistribution cov = random_cov(s, 2);
  cov.p_x1 = {0, 1, 0};
  cov.p_x2_given_x1 = {1, 0, 0, 0, 0, 1, 0, 1, 0};
  FactoredPolicyParams fp = FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only());
  FactoredPolicy t = mode_tables(fp);
  std::fill(t.action_probs.begin(), t.action_probs.end(), 0.0);
  std::fill(t.decision_probs.begin(), t.decision_probs.end(), 0.0);
  for (int k = 0; k < 3; ++k) {
    t.action_probs[static_cast<std::size_t>(k * 4 + 3)] = 1.0;
    t.decision_probs[static_cast<std::size_t>(k * 2 + 1)] = 1.0;
  }
  EXPECT_NEAR(exact_objective(m, t, cov), m.predict(1, 2, 3, 1), 1e-15);
}

TEST(ExactObjective, HandSumOnTwoByTwoByTwoByTwo) {
  const CategoricalSpec s{2, 2, 2, 2};
  const FittedModel m = random_joint_model(s, 3);
  const CovariateDistribution cov = random_cov(s, 3);
  const FactoredPolicyParams fp = random_params(s, CovariateSet::x1_only(), CovariateSet::x2_only(), 3);
  double manual = 0.0;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int a = 0; a < 2; ++a)
        for (int d = 0; d < 2; ++d) {
          const double pa = std::exp(fp.xi[x1 * 2 + a]) / (std::exp(fp.xi[x1 * 2]) + std::exp(fp.xi[x1 * 2 + 1]));
          const double pd = std::exp(fp.gamma[x2 * 2 + d]) / (std::exp(fp.gamma[x2 * 2]) + std::exp(fp.gamma[x2 * 2 + 1]));
          const double px = cov.p_x1[x1] * cov.p_x2_given_x1[x1 * 2 + x2];
          manual += px * pa * pd * oracle::sigma(m.beta[((x1 * 2 + x2) * 2 + a) * 2 + d]);
        }
  EXPECT_NEAR(exact_objective(m, fp, cov), manual, 1e-14);
}

TEST(ExactObjective, FactoredNeverBeatsJointArgmax) {
  const CategoricalSpec s{4, 3, 5, 3};
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const FittedModel m = random_joint_model(s, seed);
    const CovariateDistribution cov = random_cov(s, seed);
    double joint = 0.0;
    for (int x1 = 0; x1 < 4; ++x1)
      for (int x2 = 0; x2 < 3; ++x2) {
        double best = 0.0;
        for (int a = 0; a < 5; ++a)
          for (int d = 0; d < 3; ++d) best = std::max(best, m.predict(x1, x2, a, d));
        joint += cov.joint(x1, x2) * best;
      }
    for (auto [av, dv] : {std::pair{CovariateSet::x1_only(), CovariateSet::x2_only()}, std::pair{CovariateSet::both(), CovariateSet::none()}}) {
      const auto fp = random_params(s, av, dv, seed);
      EXPECT_LE(exact_objective(m, fp, cov), joint + 1e-15);
      EXPECT_LE(exact_objective(m, mode_tables(fp), cov), joint + 1e-15);
    }
  }
}

TEST(ExactGradient, ZeroAtSymmetricPoint) {
  const CategoricalSpec s{2, 2, 3, 3};
  FittedModel m = zero_model({s, CovariateSet::both(), {true, true}});
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int a = 0; a < 3; ++a)
        for (int d = 0; d < 3; ++d) m.beta[encode(m.features, x1, x2, a, d)] = a == d ? 1.0 : -1.0;
  const auto g = exact_gradient(m, FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only()), random_cov(s, 4));
  EXPECT_LE(g.norm(), 1e-16);
}

TEST(ExactGradient, MatchesFiniteDifferences) {
  const CategoricalSpec s{3, 3, 4, 2};
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const FittedModel m = random_joint_model(s, seed);
    const CovariateDistribution cov = random_cov(s, seed);
    for (auto [av, dv] : {std::pair{CovariateSet::x1_only(), CovariateSet::x2_only()}, std::pair{CovariateSet::both(), CovariateSet::x1_only()}}) {
      const FactoredPolicyParams fp = random_params(s, av, dv, seed + 100);
      const auto g = exact_gradient(m, fp, cov);
      std::vector<double> flat = fp.xi;
      flat.insert(flat.end(), fp.gamma.begin(), fp.gamma.end());
      auto f = [&](const std::vector<double>& v) {
        FactoredPolicyParams q = fp;
        std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q.xi.size()), q.xi.begin());
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(q.xi.size()), v.end(), q.gamma.begin());
        return exact_objective(m, q, cov);
      };
      std::vector<double> exact = g.xi;
      exact.insert(exact.end(), g.gamma.begin(), g.gamma.end());
      for (std::size_t i = 0; i < flat.size(); ++i) {
        const double fd = oracle::central_difference(f, flat, i, 1e-5);
        EXPECT_LE(std::abs(fd - exact[i]), 1e-5 * std::max(std::abs(exact[i]), 1e-4)) << "seed " << seed << " coord " << i;
      }
    }
  }
}

TEST(ScoreFunction, MeanMatchesExactGradientWithinFourSigma) {
  const CategoricalSpec s{2, 3, 3, 2};
  const FittedModel m = random_joint_model(s, 8);
  const CovariateDistribution cov = random_cov(s, 8);
  const FactoredPolicyParams fp = random_params(s, CovariateSet::x1_only(), CovariateSet::x2_only(), 8);
  const FactoredPolicy t = factor_tables(fp);
  const auto exact = exact_gradient(m, fp, cov);
  const ScoreFunctionSampler sampler(m, t, cov);
  const std::size_t n = 1'000'000;
  const std::size_t p = fp.xi.size() + fp.gamma.size();
  std::vector<double> sum(p, 0.0), sumsq(p, 0.0);
  Stream rng(123);
  FactoredGradient one{std::vector<double>(fp.xi.size()), std::vector<double>(fp.gamma.size())};
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(one.xi.begin(), one.xi.end(), 0.0);
    std::fill(one.gamma.begin(), one.gamma.end(), 0.0);
    sampler.sample(rng, 0.0, 1.0, one);
    for (std::size_t k = 0; k < p; ++k) {
      const double v = k < one.xi.size() ? one.xi[k] : one.gamma[k - one.xi.size()];
      sum[k] += v;
      sumsq[k] += v * v;
    }
  }
  for (std::size_t k = 0; k < p; ++k) {
    const double mean = sum[k] / n;
    const double sd = std::sqrt((sumsq[k] / n - mean * mean) / n);
    const double target = k < exact.xi.size() ? exact.xi[k] : exact.gamma[k - exact.xi.size()];
    EXPECT_LE(std::abs(mean - target), 4 * sd) << "coord " << k;
  }
}

TEST(Reinforce, SeparableInstanceReachesOptimum) {
  const CategoricalSpec s{2, 2, 2, 2};
  FittedModel m = zero_model({s, CovariateSet::both(), {true, true}});
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int a = 0; a < 2; ++a)
        for (int d = 0; d < 2; ++d) m.beta[encode(m.features, x1, x2, a, d)] = 1.5 * (a == x1) + 1.5 * (d == x2) - 1.5;
  const CovariateDistribution cov = random_cov(s, 9);
  const double best = best_deterministic(m, s, CovariateSet::x1_only(), CovariateSet::x2_only(), cov);
  SearchConfig cfg;
  cfg.seed = 9;
  const auto learned = reinforce_optimize(m, FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only()), cfg, cov);
  EXPECT_LE(best - exact_objective(m, learned, cov), 1e-3);
  EXPECT_LE(exact_objective(m, learned, cov), best + 1e-15);
}

TEST(Reinforce, ImprovesOnIndependentInitialization) {
  for (auto seed : fixture::kSeeds) {
    CategoricalSpec s{5, 5, 10, 2};
    const GroundTruth gt = make_default_ground_truth(s, seed, 0.02);
    const Policy explore = uniform_policy(s);
    const auto recs = simulate_interactions(gt, {{0, &explore}}, 400'000, 0, seed, {});
    const LogView log{s, recs};
    const FittedModel joint = fit(log, {s, CovariateSet::both(), {true, true}}, Target::Click);
    const FactoredPolicy indep = independent_factored_policy(fit(log, {s, CovariateSet::x1_only(), {true, false}}, Target::Click),
                                                             fit(log, {s, CovariateSet::x2_only(), {false, true}}, Target::Click));
    FactoredPolicyParams init = FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only());
    for (std::size_t i = 0; i < init.xi.size(); ++i) init.xi[i] = 2.0 * indep.action_probs[i];
    for (std::size_t i = 0; i < init.gamma.size(); ++i) init.gamma[i] = 2.0 * indep.decision_probs[i];
    SearchConfig cfg;
    cfg.seed = seed;
    int traced = 0;
    const auto learned = reinforce_optimize(joint, init, cfg, gt.covariates(), [&](const SearchTracePoint& p) {
      EXPECT_EQ(p.iteration, traced);
      ++traced;
    });
    EXPECT_EQ(traced, cfg.iterations);
    EXPECT_GE(exact_objective(joint, learned, gt.covariates()), exact_objective(joint, init, gt.covariates())) << seed;
  }
}

TEST(Reinforce, ZeroLearningRateLeavesParameters) {
  const CategoricalSpec s{3, 3, 4, 2};
  const FittedModel m = random_joint_model(s, 10);
  const auto init = random_params(s, CovariateSet::x1_only(), CovariateSet::x2_only(), 10);
  SearchConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.iterations = 20;
  const auto out = reinforce_optimize(m, init, cfg, random_cov(s, 10));
  EXPECT_EQ(out.xi, init.xi);
  EXPECT_EQ(out.gamma, init.gamma);
}

TEST(Reinforce, DeterministicForSeed) {
  const CategoricalSpec s{3, 3, 4, 2};
  const FittedModel m = random_joint_model(s, 11);
  const auto init = FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only());
  SearchConfig cfg;
  cfg.iterations = 50;
  cfg.seed = 5;
  const auto cov = random_cov(s, 11);
  const auto a = reinforce_optimize(m, init, cfg, cov);
  const auto b = reinforce_optimize(m, init, cfg, cov);
  EXPECT_EQ(a.xi, b.xi);
  EXPECT_EQ(a.gamma, b.gamma);
}

TEST(Reinforce, DivergenceAndBadInputsReported) {
  const CategoricalSpec s{3, 3, 4, 2};
  const FittedModel m = random_joint_model(s, 12);
  const auto cov = random_cov(s, 12);
  auto init = FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only());
  SearchConfig cfg;
  cfg.learning_rate = std::numeric_limits<double>::infinity();
  cfg.iterations = 200;
  EXPECT_THROW(reinforce_optimize(m, init, cfg, cov), std::runtime_error);
  cfg.learning_rate = -1.0;
  EXPECT_THROW(reinforce_optimize(m, init, cfg, cov), std::invalid_argument);
  cfg.learning_rate = 1.0;
  init.xi[0] = std::nan("");
  EXPECT_THROW(reinforce_optimize(m, init, cfg, cov), std::invalid_argument);
  EXPECT_THROW(FactoredPolicyParams::zeros({3, 3, 4, std::nullopt}, CovariateSet::x1_only(), CovariateSet::x2_only()), std::invalid_argument);
}
