#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <random>

using namespace confound;

namespace {

const CategoricalSpec kSpec{5, 5, 10, std::nullopt};

FittedModel random_model(CovariateSet inc, std::uint32_t seed, const CategoricalSpec& s = kSpec) {
  FittedModel m = zero_model({s, inc, {true, s.two_decision()}});
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-3, 3);
  for (auto& b : m.beta) b = u(rng);
  return m;
}

}  // namespace

TEST(UniformPolicy, EveryEntryIsOneOverA) {
  const Policy p = uniform_policy(kSpec);
  for (double v : p.probs) EXPECT_DOUBLE_EQ(v, 0.1);
  EXPECT_NO_THROW(p.validate());
}

TEST(UniformPolicy, CtrIsMeanClickProbability) {
  const GroundTruth gt = make_default_ground_truth(kSpec, 9, 0.0);
  double manual = 0.0;
  for (int x1 = 0; x1 < 5; ++x1)
    for (int x2 = 0; x2 < 5; ++x2) {
      double mean = 0.0;
      for (int a = 0; a < 10; ++a) mean += oracle::sigma(gt.click_logit[gt.click_index(x1, x2, a)]) / 10.0;
      manual += gt.joint(x1, x2) * mean;
    }
  EXPECT_NEAR(expected_policy_ctr(gt, uniform_policy(kSpec)), manual, 1e-12);
}

TEST(EpsilonGreedy, EpsilonOneIsUniform) {
  const Policy p = epsilon_greedy(random_model(CovariateSet::both(), 1), 1.0, kSpec);
  for (std::size_t i = 0; i < p.probs.size(); ++i) EXPECT_DOUBLE_EQ(p.probs[i], uniform_policy(kSpec).probs[i]);
}

TEST(EpsilonGreedy, EpsilonZeroIsArgmax) {
  const CategoricalSpec s{2, 2, 2, std::nullopt};
  FittedModel m = zero_model({s, CovariateSet::none(), {}});
  m.beta = {fixture::logit_of(0.3), fixture::logit_of(0.7)};
  const Policy p = epsilon_greedy(m, 0.0, s);
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2) {
      EXPECT_EQ(p.prob(x1, x2, 0), 0.0);
      EXPECT_EQ(p.prob(x1, x2, 1), 1.0);
    }
}

TEST(EpsilonGreedy, FloorIsEpsilonOverA) {
  const Policy p = epsilon_greedy(random_model(CovariateSet::x1_only(), 2), 0.05, kSpec);
  EXPECT_DOUBLE_EQ(*std::min_element(p.probs.begin(), p.probs.end()), 0.005);
  EXPECT_DOUBLE_EQ(*std::max_element(p.probs.begin(), p.probs.end()), 0.95 + 0.005);
  EXPECT_NO_THROW(p.validate());
}

TEST(EpsilonGreedy, TiesGoToLowestIndex) {
  const Policy p = epsilon_greedy(zero_model({kSpec, CovariateSet::x1_only(), {}}), 0.0, kSpec);
  for (int x1 = 0; x1 < 5; ++x1) EXPECT_EQ(p.prob(x1, 3, 0), 1.0);
}

TEST(EpsilonGreedy, RejectsBadArguments) {
  const FittedModel m = random_model(CovariateSet::x1_only(), 3);
  EXPECT_THROW(epsilon_greedy(m, -0.1, kSpec), std::invalid_argument);
  EXPECT_THROW(epsilon_greedy(m, 1.5, kSpec), std::invalid_argument);
  EXPECT_THROW(epsilon_greedy(m, 0.1, {5, 5, 9, std::nullopt}), std::invalid_argument);
}

TEST(EpsilonGreedy, VisibilityContractForX1OnlyModels) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const Policy p = epsilon_greedy(random_model(CovariateSet::x1_only(), seed), 0.05, kSpec);
    EXPECT_EQ(p.visibility, CovariateSet::x1_only());
    for (int x1 = 0; x1 < 5; ++x1)
      for (int x2a = 0; x2a < 5; ++x2a)
        for (int x2b = 0; x2b < 5; ++x2b)
          for (int a = 0; a < 10; ++a) EXPECT_EQ(p.prob(x1, x2a, a), p.prob(x1, x2b, a));
  }
}

TEST(EpsilonGreedy, ArgmaxInvariantToPositiveScaling) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> scale(0.01, 5.0);
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const FittedModel m = random_model(CovariateSet::both(), seed);
    const Policy base = epsilon_greedy(m, 0.0, kSpec);
    FittedModel scaled = m;
    for (int x1 = 0; x1 < 5; ++x1)
      for (int x2 = 0; x2 < 5; ++x2) {
        const double c = scale(rng);
        for (int a = 0; a < 10; ++a) scaled.beta[encode(m.features, x1, x2, a)] *= c;
      }
    EXPECT_EQ(epsilon_greedy(scaled, 0.0, kSpec).probs, base.probs);
  }
}

TEST(ProductPolicy, UsesProductOfModels) {
  const CategoricalSpec s{2, 2, 2, std::nullopt};
  FittedModel sale = zero_model({s, CovariateSet::x1_only(), {}}, Target::SaleGivenClick);
  FittedModel click = zero_model({s, CovariateSet::x2_only(), {}});
  // x1 = 0: sale favours a1 strongly; x2 = 0: click favours a0 mildly.
  sale.beta = {fixture::logit_of(0.2), fixture::logit_of(0.8), fixture::logit_of(0.5), fixture::logit_of(0.5)};
  click.beta = {fixture::logit_of(0.6), fixture::logit_of(0.5), fixture::logit_of(0.1), fixture::logit_of(0.9)};
  const Policy p = product_epsilon_greedy(sale, click, 0.0, s);
  EXPECT_EQ(p.visibility, CovariateSet::both());
  EXPECT_EQ(p.prob(0, 0, 1), 1.0);  // 0.2*0.6 < 0.8*0.5
  EXPECT_EQ(p.prob(1, 0, 0), 1.0);  // 0.5*0.6 > 0.5*0.5
  EXPECT_EQ(p.prob(1, 1, 1), 1.0);
  EXPECT_THROW(product_epsilon_greedy(click, sale, 0.0, s), std::invalid_argument);
}

TEST(SampleAction, DeterministicPolicyAlwaysPlaysArgmax) {
  const FittedModel m = random_model(CovariateSet::both(), 5);
  const Policy det = epsilon_greedy(m, 0.0, kSpec);
  const Policy eg = epsilon_greedy(m, 0.05, kSpec);
  Stream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const int x1 = i % 5, x2 = (i / 5) % 5;
    const auto d = sample_action(det, x1, x2, rng);
    EXPECT_EQ(det.prob(x1, x2, d.a), 1.0);
    const auto e = sample_action(eg, x1, x2, rng);
    EXPECT_EQ(e.propensity, eg.prob(x1, x2, e.a));
    EXPECT_GE(e.propensity, 0.005);
  }
  const auto top = sample_action(det, 0, 0, rng);
  EXPECT_EQ(det.prob(0, 0, top.a), 1.0);
  EXPECT_DOUBLE_EQ(eg.prob(0, 0, top.a), 1.0 - 0.05 + 0.005);
}

TEST(SampleAction, FrequenciesWithinFourSigma) {
  const Policy p = epsilon_greedy(random_model(CovariateSet::both(), 6), 0.3, kSpec);
  const std::size_t n = 1'000'000;
  std::vector<std::size_t> counts(10, 0);
  Stream rng(12);
  for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_action(p, 2, 3, rng).a)];
  for (int a = 0; a < 10; ++a) EXPECT_TRUE(oracle::within_binomial(static_cast<double>(counts[a]) / n, p.prob(2, 3, a), n)) << a;
}

TEST(SampleAction, RejectsBadContext) {
  Stream rng(1);
  EXPECT_THROW(sample_action(uniform_policy(kSpec), 5, 0, rng), std::out_of_range);
}

TEST(FactoredPolicy, ZeroLogitsAreUniformOverPairs) {
  const CategoricalSpec s{5, 5, 10, 3};
  const Policy p = to_joint(FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only()));
  for (double v : p.probs) EXPECT_NEAR(v, 1.0 / 30.0, 1e-15);
  EXPECT_NO_THROW(p.validate());
}

TEST(FactoredPolicy, HandSoftmaxProduct) {
  const CategoricalSpec s{2, 2, 2, 2};
  FactoredPolicyParams fp = FactoredPolicyParams::zeros(s, CovariateSet::x1_only(), CovariateSet::x2_only());
  fp.xi = {1.0, 0.0, 0.0, 2.0};      // keyed by x1
  fp.gamma = {0.0, std::log(3.0), -1.0, 1.0};  // keyed by x2
  const Policy p = to_joint(fp);
  const double a0 = std::exp(1.0) / (std::exp(1.0) + 1.0);  // x1 = 0
  const double d1 = 0.75;                                    // x2 = 0: 3 / (1 + 3)
  EXPECT_NEAR(p.prob(0, 0, 0 * 2 + 1), a0 * d1, 1e-15);
  EXPECT_NEAR(p.prob(0, 0, 1 * 2 + 0), (1 - a0) * (1 - d1), 1e-15);
  const double b1 = std::exp(2.0) / (1.0 + std::exp(2.0));  // x1 = 1
  const double e0 = std::exp(-1.0) / (std::exp(-1.0) + std::exp(1.0));  // x2 = 1
  EXPECT_NEAR(p.prob(1, 1, 1 * 2 + 0), b1 * e0, 1e-15);
  EXPECT_NO_THROW(p.validate());
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2) {
      double t = 0;
      for (double v : p.row(x1, x2)) t += v;
      EXPECT_NEAR(t, 1.0, 1e-15);
    }
}

TEST(FactoredPolicy, ModeTablesPickEachFactorArgmax) {
  const CategoricalSpec s{2, 2, 3, 2};
  FactoredPolicyParams fp = FactoredPolicyParams::zeros(s, CovariateSet::none(), CovariateSet::x1_only());
  fp.xi = {0.1, 0.5, 0.5};
  fp.gamma = {0.0, 1.0, 2.0, -2.0};
  const Policy p = to_joint(mode_tables(fp));
  EXPECT_EQ(p.prob(0, 1, 1 * 2 + 1), 1.0);
  EXPECT_EQ(p.prob(1, 0, 1 * 2 + 0), 1.0);
}

TEST(PolicyJson, RoundTrip) {
  const Policy p = epsilon_greedy(random_model(CovariateSet::x1_only(), 7), 0.05, kSpec);
  const Policy back = policy_from_json(json::parse(to_json(p).dump()));
  EXPECT_EQ(back.probs, p.probs);
  EXPECT_EQ(back.visibility, p.visibility);
  EXPECT_EQ(back.epsilon, p.epsilon);
  EXPECT_EQ(back.source, p.source);
}
