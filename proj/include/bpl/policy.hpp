#pragma once

// Diagonal-Gaussian candidate generator for continuous boxes, trained by
// score-function policy gradient against reward-model scores.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>

#include "bpl/error.hpp"
#include "bpl/nn.hpp"

namespace bpl {

struct PolicyConfig {
  double learning_rate = 0.02;
  double entropy_weight = 0.0;
  double baseline_decay = 0.9;
  double min_log_std = std::log(1e-3);
  double exploration = 0.1;    // uniform-mixture fraction of each pool
  double initial_std = 1.0;    // relative to half the box width
  int inner_updates = 5;       // policy updates per loop iteration
  int update_batch = 32;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("policy learning_rate must be > 0");
    if (!(entropy_weight >= 0.0)) throw ConfigError("entropy_weight must be >= 0");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
      throw ConfigError("baseline_decay must lie in [0, 1)");
    }
    if (!(exploration >= 0.0 && exploration <= 1.0)) {
      throw ConfigError("exploration must lie in [0, 1]");
    }
    if (!(initial_std > 0.0)) throw ConfigError("initial_std must be > 0");
    if (inner_updates < 0) throw ConfigError("inner_updates must be >= 0");
    if (update_batch < 2) throw ConfigError("update_batch must be >= 2");
  }
};

class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(Eigen::VectorXd lower, Eigen::VectorXd upper, const PolicyConfig& cfg)
      : lower_(std::move(lower)), upper_(std::move(upper)), cfg_(cfg) {
    cfg_.validate();
    require_dim(upper_.size(), lower_.size(), "policy box");
    if ((upper_.array() <= lower_.array()).any()) throw ConfigError("degenerate policy box");
    mean_ = 0.5 * (lower_ + upper_);
    log_std_ = (0.5 * cfg_.initial_std * (upper_ - lower_)).array().log().matrix();
    opt_ = OptimizerState(2 * dim(), AdamConfig{.learning_rate = cfg_.learning_rate});
  }

  [[nodiscard]] Eigen::Index dim() const { return lower_.size(); }
  [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
  [[nodiscard]] const Eigen::VectorXd& log_std() const { return log_std_; }
  [[nodiscard]] Eigen::VectorXd std_dev() const { return log_std_.array().exp().matrix(); }
  [[nodiscard]] const Eigen::VectorXd& lower() const { return lower_; }
  [[nodiscard]] const Eigen::VectorXd& upper() const { return upper_; }
  [[nodiscard]] double baseline() const { return baseline_; }
  [[nodiscard]] const PolicyConfig& config() const { return cfg_; }
  [[nodiscard]] const OptimizerState& optimizer() const { return opt_; }

  void set_mean(const Eigen::VectorXd& mu) {
    require_dim(mu.size(), dim(), "policy mean");
    mean_ = mu.cwiseMax(lower_).cwiseMin(upper_);
  }
  void set_log_std(const Eigen::VectorXd& ls) {
    require_dim(ls.size(), dim(), "policy log std");
    log_std_ = ls.cwiseMax(cfg_.min_log_std).cwiseMin(max_log_std());
  }

  [[nodiscard]] double max_log_std() const { return std::log((upper_ - lower_).maxCoeff()); }

  friend GaussianPolicy reinforce_update(GaussianPolicy policy, const Eigen::MatrixXd& candidates,
                                         std::span<const double> rewards);

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  PolicyConfig cfg_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd log_std_;
  double baseline_ = 0.0;
  bool baseline_set_ = false;
  OptimizerState opt_;
};

/// M candidates (columns): Gaussian draws clamped to the box, with round(eps*M)
/// of them replaced by uniform draws over the box. `exploration` overrides the
/// configured eps when non-negative.
template <typename Rng>
Eigen::MatrixXd sample_candidates(const GaussianPolicy& policy, int m, Rng& rng,
                                  double exploration = -1.0) {
  if (m < 2) throw ConfigError("sample_candidates needs M >= 2");
  if ((policy.upper().array() <= policy.lower().array()).any()) {
    throw ConfigError("degenerate policy box");
  }
  const double eps = exploration >= 0.0 ? exploration : policy.config().exploration;
  const int n_uniform = static_cast<int>(std::lround(eps * m));
  const Eigen::Index d = policy.dim();
  const Eigen::VectorXd sd = policy.std_dev();
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd xs(d, m);
  for (int k = 0; k < m; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lo = policy.lower()(i);
      const double hi = policy.upper()(i);
      if (k < m - n_uniform) {
        xs(i, k) = std::clamp(policy.mean()(i) + sd(i) * g(rng), lo, hi);
      } else {
        xs(i, k) = lo + (hi - lo) * u(rng);
      }
    }
  }
  return xs;
}

/// One Adam ascent step on sum_k (r_k - b) grad log N(x_k; mu, sigma) / M plus
/// the entropy bonus, followed by the baseline update b <- decay*b + (1-decay)*mean(r).
inline GaussianPolicy reinforce_update(GaussianPolicy policy, const Eigen::MatrixXd& candidates,
                                       std::span<const double> rewards) {
  require_dim(static_cast<long>(rewards.size()), candidates.cols(), "reinforce rewards");
  require_dim(candidates.rows(), policy.dim(), "reinforce candidates");
  if (rewards.empty()) return policy;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericalError("reinforce_update: non-finite reward");
  }
  const auto& cfg = policy.cfg_;
  const Eigen::Index d = policy.dim();
  const auto m = static_cast<double>(rewards.size());
  double reward_mean = 0.0;
  for (double r : rewards) reward_mean += r;
  reward_mean /= m;
  if (!policy.baseline_set_) {
    policy.baseline_ = reward_mean;
    policy.baseline_set_ = true;
  }

  const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std_.array()).exp();
  Eigen::VectorXd grad_mu = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd grad_ls = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < candidates.cols(); ++k) {
    const double adv = rewards[static_cast<std::size_t>(k)] - policy.baseline_;
    const Eigen::ArrayXd diff = (candidates.col(k) - policy.mean_).array();
    grad_mu.array() += adv * diff * inv_var;
    grad_ls.array() += adv * (diff.square() * inv_var - 1.0);
  }
  grad_mu /= m;
  grad_ls = grad_ls / m + Eigen::VectorXd::Constant(d, cfg.entropy_weight);

  Eigen::VectorXd params(2 * d);
  params << policy.mean_, policy.log_std_;
  Eigen::VectorXd grad(2 * d);
  grad << -grad_mu, -grad_ls;  // Adam descends
  opt_step(params, grad, policy.opt_);
  policy.mean_ = params.head(d).cwiseMax(policy.lower_).cwiseMin(policy.upper_);
  policy.log_std_ = params.tail(d).cwiseMax(cfg.min_log_std).cwiseMin(policy.max_log_std());
  policy.baseline_ = cfg.baseline_decay * policy.baseline_ + (1.0 - cfg.baseline_decay) * reward_mean;
  if (!std::isfinite(policy.baseline_)) throw NumericalError("reinforce_update: baseline diverged");
  return policy;
}

}  // namespace bpl
