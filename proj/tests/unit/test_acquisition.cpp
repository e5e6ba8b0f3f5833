#include <gtest/gtest.h>

#include <random>

#include "bpl/acquisition.hpp"

using bpl::AcqConfig;
using bpl::AcqMode;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<double> random_list(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

int argmax_skip(const std::vector<double>& v, int skip) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i != skip && (best < 0 || v[i] > v[best])) best = i;
  }
  return best;
}

bpl::LaplacePosterior seeded_posterior(int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd A(h, h);
  for (auto& v : A.reshaped()) v = g(rng);
  VectorXd w(h);
  for (auto& v : w) v = g(rng);
  return bpl::build_posterior(w, A * A.transpose() + 0.5 * MatrixXd::Identity(h, h));
}

MatrixXd random_features(int h, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd f(h, m);
  for (auto& v : f.reshaped()) v = g(rng);
  return f;
}

}  // namespace

TEST(ThompsonBest, PointMassPicksMeanArgmax) {
  VectorXd w(2);
  w << 1.0, -0.5;
  const auto post = bpl::build_posterior(w, 1e24 * MatrixXd::Identity(2, 2));
  const MatrixXd f = random_features(2, 9, 1);
  const VectorXd mean = f.transpose() * w;
  Eigen::Index arg = 0;
  mean.maxCoeff(&arg);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(bpl::thompson_best(post, f, rng), arg);
}

TEST(ThompsonBest, PoolOfOneAndEmptyPool) {
  const auto post = seeded_posterior(3, 3);
  std::mt19937_64 rng(1);
  EXPECT_EQ(bpl::thompson_best(post, random_features(3, 1, 4), rng), 0);
  EXPECT_THROW(bpl::thompson_best(post, MatrixXd(3, 0), rng), bpl::DimensionError);
}

TEST(ThompsonBest, SymmetricPosteriorSplitsEvenly) {
  VectorXd w(2);
  w << 0.5, 0.5;
  const auto post = bpl::build_posterior(w, MatrixXd::Identity(2, 2));
  const MatrixXd f = MatrixXd::Identity(2, 2);
  std::mt19937_64 rng(5);
  int first = 0;
  for (int k = 0; k < 10000; ++k) first += bpl::thompson_best(post, f, rng) == 0;
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

TEST(SparringRival, EqualScoresUniformChiSquare) {
  const int m = 8;
  const int best = 3;
  const std::vector<double> s(m, 1.7);
  std::mt19937_64 rng(6);
  std::vector<int> counts(m, 0);
  const int n = 10000;
  for (int k = 0; k < n; ++k) ++counts[bpl::sparring_rival(s, 1.0, best, rng)];
  EXPECT_EQ(counts[best], 0);
  const double expected = static_cast<double>(n) / (m - 1);
  double chi2 = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i != best) chi2 += std::pow(counts[i] - expected, 2) / expected;
  }
  EXPECT_LT(chi2, 16.812);  // chi-square 0.99 quantile, 6 degrees of freedom
}

TEST(SparringRival, LowTemperatureIsArgmax) {
  const std::vector<double> s = {5.0, 0.1, 0.3, 0.2, 0.25};
  std::mt19937_64 rng(7);
  int hits = 0;
  for (int k = 0; k < 10000; ++k) hits += bpl::sparring_rival(s, 1e-6, 0, rng) == 2;
  EXPECT_GT(hits / 10000.0, 0.999);
}

TEST(SparringRival, ClosedFormSoftmax) {
  const std::vector<double> s = {9.0, 0.0, std::log(2.0)};
  std::mt19937_64 rng(8);
  int second = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const int r = bpl::sparring_rival(s, 1.0, 0, rng);
    ASSERT_NE(r, 0);
    second += r == 2;
  }
  EXPECT_NEAR(second / static_cast<double>(n), 2.0 / 3.0, 0.02);
  EXPECT_NEAR(1.0 - second / static_cast<double>(n), 1.0 / 3.0, 0.02);
}

TEST(SparringRival, LargeScoresDoNotOverflow) {
  const std::vector<double> s = {0.0, 1e4, 1e4 + 1.0};
  std::mt19937_64 rng(9);
  const int r = bpl::sparring_rival(s, 1e-3, 0, rng);
  EXPECT_EQ(r, 2);
}

TEST(SparringRival, Errors) {
  std::mt19937_64 rng(1);
  const std::vector<double> s = {0.0, 1.0};
  EXPECT_THROW(bpl::sparring_rival(s, 0.0, 0, rng), bpl::ConfigError);
  EXPECT_THROW(bpl::sparring_rival(std::vector<double>{1.0}, 1.0, 0, rng), bpl::DimensionError);
}

TEST(MaxvarRival, DirectArgmaxAndTies) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(bpl::maxvar_rival(std::vector<double>{nan, 0.1, 0.3, 0.2}, 0), 2);
  EXPECT_EQ(bpl::maxvar_rival(std::vector<double>{0.0, 0.0, 0.0, 0.0}, 0), 1);
  EXPECT_EQ(bpl::maxvar_rival(std::vector<double>{0.0, 0.0, 0.0}, 1), 0);
}

TEST(MaxvarRival, AgreesWithHighSampleReference) {
  const int h = 4;
  const int m = 6;
  const auto post = seeded_posterior(h, 10);
  const MatrixXd f = random_features(h, m, 11);
  const int best = 0;
  std::mt19937_64 rng(12);
  std::vector<double> v(m, 0.0);
  for (int i = 1; i < m; ++i) v[i] = bpl::win_prob_stats(post, f.col(best), f.col(i), 4096, rng).var;

  std::mt19937_64 ref_rng(13);
  const MatrixXd heads = bpl::sample_heads(post, 1000000, ref_rng);
  std::vector<double> ref(m, 0.0);
  for (int i = 1; i < m; ++i) {
    const Eigen::ArrayXd p = (heads.transpose() * (f.col(best) - f.col(i)))
                                 .array()
                                 .unaryExpr([](double z) { return bpl::logistic(z); });
    ref[i] = (p - p.mean()).square().sum() / (p.size() - 1);
  }
  EXPECT_EQ(bpl::maxvar_rival(v, best), bpl::maxvar_rival(ref, best));
}

TEST(MixedRival, HandComputedExample) {
  // Population z-scores: z(S_spar) = (-1.2247, 0, 1.2247),
  // z(S_var) = (1.2247, -1.2247, 0); half of each.
  const std::vector<double> spar = {1.0, 2.0, 3.0};
  const std::vector<double> var = {3.0, 1.0, 2.0};
  const auto c = bpl::mixed_rival(spar, var, 0.5, -1);
  EXPECT_EQ(c.rival, 2);
  EXPECT_NEAR(c.j_alpha[0], 0.0, 1e-12);
  EXPECT_NEAR(c.j_alpha[1], -std::sqrt(1.5) / 2.0, 1e-12);
  EXPECT_NEAR(c.j_alpha[2], std::sqrt(1.5) / 2.0, 1e-12);
}

TEST(MixedRival, EndpointsReduceToSingleFamily) {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> size(2, 40);
  for (int t = 0; t < 1000; ++t) {
    const int m = size(rng);
    const auto spar = random_list(m, rng);
    const auto var = random_list(m, rng);
    const int best = std::uniform_int_distribution<int>(0, m - 1)(rng);
    EXPECT_EQ(bpl::mixed_rival(spar, var, 1.0, best).rival, argmax_skip(spar, best));
    EXPECT_EQ(bpl::mixed_rival(spar, var, 0.0, best).rival, argmax_skip(var, best));
  }
}

TEST(MixedRival, AffineInvariance) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int t = 0; t < 500; ++t) {
    const int m = 12;
    const auto spar = random_list(m, rng);
    const auto var = random_list(m, rng);
    auto spar2 = spar;
    auto var2 = var;
    const double a = scale(rng);
    const double b = shift(rng);
    const double c = scale(rng);
    const double d = shift(rng);
    for (auto& x : spar2) x = a * x + b;
    for (auto& x : var2) x = c * x + d;
    for (double alpha : {0.0, 0.3, 0.5, 0.9, 1.0}) {
      EXPECT_EQ(bpl::mixed_rival(spar, var, alpha, 4).rival,
                bpl::mixed_rival(spar2, var2, alpha, 4).rival);
    }
  }
}

TEST(MixedRival, DegenerateFamilyIsZeroed) {
  const std::vector<double> spar = {2.0, 2.0, 2.0, 2.0};
  const std::vector<double> var = {0.0, 0.1, 0.4, 0.2};
  const auto c = bpl::mixed_rival(spar, var, 0.9, 0);
  EXPECT_EQ(c.rival, 2);
  EXPECT_TRUE(std::isnan(c.j_alpha[0]));
  const std::vector<double> flat = {1.0, 1.0, 1.0};
  EXPECT_EQ(bpl::mixed_rival(flat, flat, 0.5, 0).rival, 1);
}

TEST(MixedRival, Errors) {
  const std::vector<double> s = {0.0, 1.0};
  EXPECT_THROW(bpl::mixed_rival(s, s, 1.5, 0), bpl::ConfigError);
  EXPECT_THROW(bpl::mixed_rival(s, std::vector<double>{1.0}, 0.5, 0), bpl::DimensionError);
}

TEST(SelectFromDraws, SparringDispatch) {
  const int m = 6;
  const VectorXd mean = VectorXd::LinSpaced(m, 0.0, 1.0);
  const VectorXd var = VectorXd::Constant(m, 0.2);
  const VectorXd thompson = VectorXd::LinSpaced(m, 1.0, 0.0);  // best = 0
  const MatrixXd draws = random_features(50, m, 16);
  AcqConfig cfg;
  cfg.mode = AcqMode::sparring;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 r1(s);
    std::mt19937_64 r2(s);
    const auto q = bpl::select_from_draws(mean, var, thompson, draws, bpl::logistic, cfg, r1);
    EXPECT_EQ(q.best, 0);
    EXPECT_EQ(q.rival, bpl::sparring_rival(q.s_spar, cfg.temperature, q.best, r2));
  }
}

TEST(SelectFromDraws, MaxvarDispatchAndDiagnostics) {
  const int m = 7;
  const VectorXd mean = VectorXd::LinSpaced(m, -1.0, 1.0);
  const VectorXd var = VectorXd::Constant(m, 0.2);
  VectorXd thompson = VectorXd::Zero(m);
  thompson(4) = 3.0;
  const MatrixXd draws = random_features(200, m, 17);
  AcqConfig cfg;
  cfg.mode = AcqMode::maxvar;
  std::mt19937_64 rng(1);
  const auto q = bpl::select_from_draws(mean, var, thompson, draws, bpl::logistic, cfg, rng);
  EXPECT_EQ(q.best, 4);
  EXPECT_EQ(q.rival, bpl::maxvar_rival(q.s_var, q.best));
  EXPECT_TRUE(std::isnan(q.s_var[4]));
  EXPECT_TRUE(std::isnan(q.s_spar[4]));
  EXPECT_EQ(q.s_spar[2], mean(2));
  // S_var by hand for one rival.
  Eigen::ArrayXd p(200);
  for (int k = 0; k < 200; ++k) p(k) = bpl::logistic(draws(k, 4) - draws(k, 1));
  EXPECT_NEAR(q.s_var[1], (p - p.mean()).square().sum() / 199.0, 1e-15);
}

TEST(SelectDuel, PairPoolForcesRival) {
  const auto model = bpl::RewardModel::initialize(2, bpl::RewardConfig{.hidden = {5}}, 3);
  const auto post = bpl::build_posterior(model.head_weights(), MatrixXd::Identity(6, 6));
  const MatrixXd pool = MatrixXd::Random(2, 2);
  for (auto mode : {AcqMode::sparring, AcqMode::maxvar, AcqMode::mixed}) {
    AcqConfig cfg;
    cfg.mode = mode;
    std::mt19937_64 rng(18);
    for (int k = 0; k < 20; ++k) {
      const auto q = bpl::select_duel(post, model, pool, cfg, rng);
      EXPECT_EQ(q.rival, 1 - q.best);
      EXPECT_EQ(q.first, pool.col(q.best));
      EXPECT_EQ(q.second, pool.col(q.rival));
    }
  }
}

TEST(SelectDuel, BestNeverEqualsRival) {
  const auto model = bpl::RewardModel::initialize(3, bpl::RewardConfig{.hidden = {8}}, 4);
  const auto post = bpl::build_posterior(model.head_weights(), 0.5 * MatrixXd::Identity(9, 9));
  std::mt19937_64 rng(19);
  for (auto mode : {AcqMode::sparring, AcqMode::maxvar, AcqMode::mixed}) {
    AcqConfig cfg;
    cfg.mode = mode;
    cfg.pool_size = 10;
    cfg.mc_samples = 32;
    for (int k = 0; k < 100; ++k) {
      const auto q = bpl::select_duel(post, model, MatrixXd::Random(3, 10), cfg, rng);
      EXPECT_NE(q.best, q.rival);
      EXPECT_EQ(q.j_alpha.size(), 10u);
    }
  }
}

TEST(SelectDuel, DeterministicGivenRng) {
  const auto model = bpl::RewardModel::initialize(2, bpl::RewardConfig{.hidden = {6}}, 5);
  const auto post = bpl::build_posterior(model.head_weights(), MatrixXd::Identity(7, 7));
  const MatrixXd pool = MatrixXd::Random(2, 12);
  std::mt19937_64 a(20);
  std::mt19937_64 b(20);
  const auto qa = bpl::select_duel(post, model, pool, AcqConfig{}, a);
  const auto qb = bpl::select_duel(post, model, pool, AcqConfig{}, b);
  EXPECT_EQ(qa.best, qb.best);
  EXPECT_EQ(qa.rival, qb.rival);
}

TEST(DuelQueryJson, NanBecomesNull) {
  const auto model = bpl::RewardModel::initialize(2, bpl::RewardConfig{.hidden = {4}}, 6);
  const auto post = bpl::build_posterior(model.head_weights(), MatrixXd::Identity(5, 5));
  std::mt19937_64 rng(21);
  auto q = bpl::select_duel(post, model, MatrixXd::Random(2, 5), AcqConfig{}, rng);
  q.id = 17;
  const auto j = bpl::to_json(q);
  EXPECT_EQ(j["duel_id"], 17);
  EXPECT_TRUE(j["s_var"][q.best].is_null());
  EXPECT_EQ(j["first"].size(), 2u);
  EXPECT_EQ(j["mode"], "mixed");
  EXPECT_DOUBLE_EQ(j["first_posterior"]["mean"].get<double>(), q.mean[q.best]);
}

TEST(AcqConfig, Validation) {
  AcqConfig cfg;
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), bpl::ConfigError);
  EXPECT_THROW(bpl::acq_mode_from_string("greedy"), bpl::ConfigError);
  EXPECT_EQ(bpl::acq_mode_from_string("maxvar"), AcqMode::maxvar);
}
