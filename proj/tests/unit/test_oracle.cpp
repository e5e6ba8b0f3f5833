#include <gtest/gtest.h>

#include <random>

#include "bpl/oracle.hpp"

using bpl::OracleConfig;
using bpl::OracleMode;
using bpl::Preference;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

double first_frequency(const OracleConfig& cfg, double u1, double u2, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int first = 0;
  for (int k = 0; k < n; ++k) first += bpl::answer_duel(cfg, u1, u2, rng) == Preference::first;
  return static_cast<double>(first) / n;
}

}  // namespace

TEST(NormalCdf, ReferenceValues) {
  // 30-digit references.
  EXPECT_NEAR(bpl::normal_cdf(1.0 / std::sqrt(2.0)), 0.760249938906523269, 1e-15);
  EXPECT_NEAR(bpl::normal_cdf(-3.0), 0.00134989803163009453, 1e-17);
  EXPECT_NEAR(bpl::normal_cdf(2.5), 0.993790334674223865, 1e-15);
  EXPECT_NEAR(bpl::normal_cdf(-8.0) / 6.22096057427178412e-16, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(bpl::normal_cdf(0.0), 0.5);
}

TEST(Rosenbrock, KnownValues) {
  for (int d : {2, 3, 5, 10}) EXPECT_EQ(bpl::rosenbrock(VectorXd::Ones(d)), 0.0);
  EXPECT_EQ(bpl::rosenbrock(vec({0.0, 0.0})), 1.0);
  EXPECT_EQ(bpl::rosenbrock(vec({-1.0, 1.0})), 4.0);
  EXPECT_THROW(bpl::rosenbrock(vec({1.0})), bpl::DimensionError);
}

TEST(Rosenbrock, NonNegativeAndZeroOnlyAtOptimum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.048, 2.048);
  for (int k = 0; k < 1000; ++k) {
    VectorXd x(4);
    for (auto& v : x) v = u(rng);
    EXPECT_GT(bpl::rosenbrock(x), 0.0);
  }
}

TEST(LatentUtility, OrderReversalAndOptimum) {
  const auto p = bpl::make_problem("rosenbrock", 2);
  EXPECT_EQ(bpl::latent_utility(p, VectorXd::Ones(2)), 0.0);
  EXPECT_EQ(bpl::latent_utility(p, vec({0.0, 0.0})), -1.0);
  const VectorXd a = vec({0.5, 0.2});
  const VectorXd b = vec({-1.5, 2.0});
  EXPECT_EQ(bpl::latent_utility(p, a) > bpl::latent_utility(p, b),
            bpl::objective(p, a) < bpl::objective(p, b));
  EXPECT_EQ(bpl::absolute_error(p, bpl::objective(p, vec({0.0, 0.0}))), 1.0);
}

TEST(ProblemSpec, Validation) {
  EXPECT_THROW(bpl::make_problem("rosenbrock", 1), bpl::ConfigError);
  EXPECT_THROW(bpl::make_problem("ackley", 2), bpl::ConfigError);
  EXPECT_THROW(bpl::make_problem("sphere", 2, 1.0, 1.0), bpl::ConfigError);
  EXPECT_THROW(bpl::make_problem("rosenbrock", 2, 2.0, 3.0), bpl::ConfigError);  // optimum outside
  const auto s = bpl::make_problem("sphere", 1);
  EXPECT_EQ(s.dim, 1);
  EXPECT_NEAR(bpl::make_problem("rosenbrock", 2).box_diagonal(), 4.096 * std::sqrt(2.0), 1e-12);
}

TEST(AnswerDuel, DeterministicMode) {
  OracleConfig cfg;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(bpl::answer_duel(cfg, 3.0, 1.0, rng), Preference::first);
  EXPECT_EQ(bpl::answer_duel(cfg, 1.0, 3.0, rng), Preference::second);
  EXPECT_EQ(bpl::answer_duel(cfg, 2.0, 2.0, rng), Preference::first);  // tie
}

TEST(AnswerDuel, ProbitEqualUtilities) {
  OracleConfig cfg{.mode = OracleMode::probit, .noise = 0.3};
  EXPECT_DOUBLE_EQ(bpl::probit_first_probability(1.0, 1.0, 0.3), 0.5);
  const double f = first_frequency(cfg, 1.0, 1.0, 10000, 7);
  EXPECT_GE(f, 0.48);
  EXPECT_LE(f, 0.52);
}

TEST(AnswerDuel, ProbitUnitGap) {
  OracleConfig cfg{.mode = OracleMode::probit, .noise = 1.0};
  EXPECT_NEAR(bpl::probit_first_probability(1.0, 0.0, 1.0), 0.7602499389, 1e-10);
  EXPECT_NEAR(first_frequency(cfg, 1.0, 0.0, 100000, 11), 0.7602499389, 0.005);
}

TEST(AnswerDuel, ProbitSymmetry) {
  for (double gap : {-2.0, -0.3, 0.0, 0.7, 5.0}) {
    EXPECT_NEAR(bpl::probit_first_probability(gap, 0.0, 0.4) +
                    bpl::probit_first_probability(0.0, gap, 0.4),
                1.0, 1e-15);
  }
}

TEST(AnswerDuel, SmallNoiseAgreesWithDeterministic) {
  OracleConfig probit{.mode = OracleMode::probit, .noise = 0.01};
  OracleConfig det;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int disagree = 0;
  int n = 0;
  while (n < 100000) {
    const double a = u(rng);
    const double b = u(rng);
    if (std::abs(a - b) <= 10 * probit.noise) continue;
    ++n;
    disagree += bpl::answer_duel(probit, a, b, rng) != bpl::answer_duel(det, a, b, rng);
  }
  EXPECT_LT(static_cast<double>(disagree) / n, 1e-4);
}

TEST(AnswerDuel, HumanModeWithoutServiceTimesOut) {
  OracleConfig cfg{.mode = OracleMode::human};
  std::mt19937_64 rng(1);
  EXPECT_THROW(bpl::answer_duel(cfg, 1.0, 0.0, rng), bpl::OracleTimeout);
}

TEST(AnswerDuel, NonFiniteRejected) {
  OracleConfig cfg;
  std::mt19937_64 rng(1);
  EXPECT_THROW(bpl::answer_duel(cfg, std::nan(""), 0.0, rng), bpl::NumericalError);
}

TEST(OracleConfig, Validation) {
  OracleConfig cfg{.mode = OracleMode::probit, .noise = 0.0};
  EXPECT_THROW(cfg.validate(), bpl::ConfigError);
  EXPECT_EQ(bpl::oracle_mode_from_string("probit"), OracleMode::probit);
  EXPECT_THROW(bpl::oracle_mode_from_string("psychic"), bpl::ConfigError);
}
