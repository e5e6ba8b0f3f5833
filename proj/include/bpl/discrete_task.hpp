#pragma once

// Synthetic discrete-candidate preference task: a hidden linear utility over
// R^d, fresh candidate pools each round, and a fixed held-out pair set.
// Compares active duel selection against uniformly random pairs by the number
// of labeled pairs needed to reach a held-out accuracy level.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "bpl/acquisition.hpp"
#include "bpl/laplace.hpp"
#include "bpl/reward_model.hpp"

namespace bpl {

struct DiscreteTaskConfig {
  int dim = 16;
  int pool_size = 32;
  int test_pairs = 500;
  int max_pairs = 400;
  int refit_every = 5;
  int cold_start = 10;   // random pairs before the first posterior
  double accuracy_target = 0.75;
  AcqConfig acq;         // mode/alpha for the active arm
  RewardConfig reward;

  DiscreteTaskConfig() {
    reward.hidden = {32};
    reward.epochs = 150;
    reward.learning_rate = 1e-2;
    reward.weight_decay = 1e-2;
  }

  void validate() const {
    if (dim < 1) throw ConfigError("discrete task dim must be >= 1");
    if (pool_size < 2) throw ConfigError("discrete task pool_size must be >= 2");
    if (test_pairs < 1) throw ConfigError("discrete task needs test pairs");
    if (refit_every < 1) throw ConfigError("refit_every must be >= 1");
    if (cold_start < 1 || cold_start > max_pairs) throw ConfigError("bad cold_start");
    acq.validate();
    reward.validate();
  }
};

struct DiscreteCurvePoint {
  int pairs = 0;
  double accuracy = 0.0;
};

struct DiscreteTaskResult {
  std::vector<DiscreteCurvePoint> curve;
  std::optional<int> pairs_to_target;
};

namespace detail {

inline PreferenceRecord label_pair(const Eigen::VectorXd& w_true, const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& b, long iteration) {
  PreferenceRecord r;
  const bool a_wins = w_true.dot(a) >= w_true.dot(b);
  r.winner = a_wins ? a : b;
  r.loser = a_wins ? b : a;
  r.iteration = iteration;
  return r;
}

template <typename Rng>
Eigen::MatrixXd gaussian_pool(int d, int m, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd xs(d, m);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < d; ++i) xs(i, k) = g(rng);
  }
  return xs;
}

}  // namespace detail

/// One arm of the task. `active` selects duels with select_duel on each fresh
/// pool; otherwise two distinct pool members are drawn uniformly. The hidden
/// utility and held-out pairs depend only on `seed`, so both arms see the same
/// problem.
inline DiscreteTaskResult run_discrete_task(const DiscreteTaskConfig& cfg, bool active,
                                            std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 problem_rng(seed);
  Eigen::VectorXd w_true = detail::gaussian_pool(cfg.dim, 1, problem_rng).col(0);
  w_true.normalize();
  std::vector<PreferenceRecord> test;
  test.reserve(static_cast<std::size_t>(cfg.test_pairs));
  for (int k = 0; k < cfg.test_pairs; ++k) {
    const Eigen::MatrixXd ab = detail::gaussian_pool(cfg.dim, 2, problem_rng);
    test.push_back(detail::label_pair(w_true, ab.col(0), ab.col(1), k));
  }

  std::mt19937_64 rng(seed ^ (active ? 0x9e3779b97f4a7c15ULL : 0x632be59bd9b4e019ULL));
  std::vector<PreferenceRecord> data;
  std::optional<RewardModel> model;
  std::optional<LaplacePosterior> post;
  DiscreteTaskResult out;
  while (static_cast<int>(data.size()) < cfg.max_pairs) {
    const Eigen::MatrixXd pool = detail::gaussian_pool(cfg.dim, cfg.pool_size, rng);
    int a = 0;
    int b = 1;
    if (active && post) {
      const DuelQuery q = select_duel(*post, *model, pool, cfg.acq, rng);
      a = q.best;
      b = q.rival;
    } else {
      std::uniform_int_distribution<int> pick(0, cfg.pool_size - 1);
      a = pick(rng);
      do {
        b = pick(rng);
      } while (b == a);
    }
    data.push_back(detail::label_pair(w_true, pool.col(a), pool.col(b),
                                      static_cast<long>(data.size())));
    const int n = static_cast<int>(data.size());
    if (n < cfg.cold_start || (n - cfg.cold_start) % cfg.refit_every != 0) continue;
    model = fit_reward_map(data, cfg.reward, seed + static_cast<std::uint64_t>(n),
                           model ? &*model : nullptr);
    post = fit_laplace(*model, data);
    const double acc = pair_accuracy(*model, test);
    out.curve.push_back({n, acc});
    if (!out.pairs_to_target && acc >= cfg.accuracy_target) {
      out.pairs_to_target = n;
      break;
    }
  }
  return out;
}

}  // namespace bpl
