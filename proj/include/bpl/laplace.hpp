#pragma once

// Last-layer Laplace posterior over the reward head.
//
// For the Bradley-Terry loss with head w and pair feature gap
// delta = phi(winner) - phi(loser), the Hessian of the summed loss plus the
// Gaussian prior is exact and closed-form:
//   H = sum_k p_k (1 - p_k) delta_k delta_k^T + lambda I,  p_k = sigma(w^T delta_k).
// H is symmetric with every eigenvalue >= lambda, so the Cholesky factor
// always exists up to rounding.

#include <Eigen/Dense>

#include <random>
#include <span>

#include "bpl/error.hpp"
#include "bpl/reward_model.hpp"

namespace bpl {

/// Adds one pair's curvature term p(1-p) delta delta^T to H.
inline void add_pair_curvature(Eigen::MatrixXd& hessian, const Eigen::VectorXd& head,
                               const Eigen::VectorXd& delta) {
  require_dim(delta.size(), head.size(), "pair feature gap");
  const double p = logistic(head.dot(delta));
  hessian.selfadjointView<Eigen::Lower>().rankUpdate(delta, p * (1.0 - p));
  hessian.triangularView<Eigen::StrictlyUpper>() = hessian.transpose().eval();
}

/// Feature gaps phi(winner) - phi(loser), one column per record.
inline Eigen::MatrixXd pair_feature_gaps(const RewardModel& model,
                                         std::span<const PreferenceRecord> data) {
  const Eigen::Index d = model.input_dim();
  Eigen::MatrixXd w(d, static_cast<Eigen::Index>(data.size()));
  Eigen::MatrixXd l(d, static_cast<Eigen::Index>(data.size()));
  for (std::size_t k = 0; k < data.size(); ++k) {
    require_dim(data[k].winner.size(), d, "preference winner");
    require_dim(data[k].loser.size(), d, "preference loser");
    w.col(static_cast<Eigen::Index>(k)) = data[k].winner;
    l.col(static_cast<Eigen::Index>(k)) = data[k].loser;
  }
  if (data.empty()) return Eigen::MatrixXd(model.feature_dim(), 0);
  return reward_features_batch(model, w) - reward_features_batch(model, l);
}

/// Hessian from precomputed feature gaps (columns) at head weights `head`.
inline Eigen::MatrixXd head_hessian(const Eigen::VectorXd& head, const Eigen::MatrixXd& gaps,
                                    double prior_precision) {
  require_dim(gaps.rows(), head.size(), "feature gap rows");
  const Eigen::Index h = head.size();
  Eigen::ArrayXd curv(gaps.cols());
  for (Eigen::Index k = 0; k < gaps.cols(); ++k) {
    const double p = logistic(head.dot(gaps.col(k)));
    curv(k) = p * (1.0 - p);
  }
  Eigen::MatrixXd hess = Eigen::MatrixXd::Identity(h, h) * prior_precision;
  const Eigen::MatrixXd scaled = gaps * curv.sqrt().matrix().asDiagonal();
  hess.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
  hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose().eval();
  return hess;
}

inline Eigen::MatrixXd last_layer_hessian(const RewardModel& model,
                                          std::span<const PreferenceRecord> data) {
  return head_hessian(model.head_weights(), pair_feature_gaps(model, data),
                      model.prior_precision());
}

struct Predictive {
  double mean = 0.0;
  double var = 0.0;
};

class LaplacePosterior {
 public:
  LaplacePosterior() = default;

  [[nodiscard]] const Eigen::VectorXd& w_map() const { return w_map_; }
  [[nodiscard]] const Eigen::MatrixXd& precision() const { return precision_; }
  [[nodiscard]] Eigen::MatrixXd cholesky_factor() const { return llt_.matrixL(); }
  [[nodiscard]] Eigen::Index dim() const { return w_map_.size(); }
  [[nodiscard]] double jitter() const { return jitter_; }

  /// L^{-1} v, so that v^T H^{-1} v = |L^{-1} v|^2.
  [[nodiscard]] Eigen::VectorXd whiten(const Eigen::VectorXd& v) const {
    require_dim(v.size(), dim(), "posterior whiten");
    return llt_.matrixL().solve(v);
  }

  [[nodiscard]] Eigen::MatrixXd whiten(const Eigen::MatrixXd& vs) const {
    require_dim(vs.rows(), dim(), "posterior whiten");
    return llt_.matrixL().solve(vs);
  }

  /// w_map + L^{-T} z.
  [[nodiscard]] Eigen::VectorXd head_from_normal(const Eigen::VectorXd& z) const {
    require_dim(z.size(), dim(), "posterior standard normal draw");
    return w_map_ + llt_.matrixU().solve(z);
  }

  /// Column-wise version of head_from_normal.
  [[nodiscard]] Eigen::MatrixXd heads_from_normals(const Eigen::MatrixXd& z) const {
    require_dim(z.rows(), dim(), "posterior standard normal draws");
    Eigen::MatrixXd heads = llt_.matrixU().solve(z);
    heads.colwise() += w_map_;
    return heads;
  }

  friend LaplacePosterior build_posterior(Eigen::VectorXd w_map, Eigen::MatrixXd precision);

 private:
  Eigen::VectorXd w_map_;
  Eigen::MatrixXd precision_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Factorizes H = L L^T; retries once with 1e-8 I added before giving up.
inline LaplacePosterior build_posterior(Eigen::VectorXd w_map, Eigen::MatrixXd precision) {
  require_dim(precision.rows(), w_map.size(), "posterior precision rows");
  require_dim(precision.cols(), w_map.size(), "posterior precision cols");
  if (!precision.allFinite() || !w_map.allFinite()) {
    throw NumericalError("build_posterior: non-finite input");
  }
  LaplacePosterior post;
  post.w_map_ = std::move(w_map);
  post.precision_ = std::move(precision);
  post.llt_.compute(post.precision_);
  if (post.llt_.info() != Eigen::Success) {
    post.jitter_ = 1e-8;
    post.precision_.diagonal().array() += post.jitter_;
    post.llt_.compute(post.precision_);
    if (post.llt_.info() != Eigen::Success) {
      throw NumericalError("build_posterior: precision matrix is not positive definite");
    }
  }
  return post;
}

inline LaplacePosterior fit_laplace(const RewardModel& model,
                                    std::span<const PreferenceRecord> data) {
  return build_posterior(model.head_weights(), last_layer_hessian(model, data));
}

inline Predictive predictive(const LaplacePosterior& post, const Eigen::VectorXd& phi) {
  require_dim(phi.size(), post.dim(), "predictive features");
  return {post.w_map().dot(phi), post.whiten(phi).squaredNorm()};
}

template <typename Rng>
Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = g(rng);
  return z;
}

template <typename Rng>
Eigen::VectorXd sample_head(const LaplacePosterior& post, Rng& rng) {
  return post.head_from_normal(standard_normal(post.dim(), rng));
}

/// n posterior heads as columns.
template <typename Rng>
Eigen::MatrixXd sample_heads(const LaplacePosterior& post, int n, Rng& rng) {
  Eigen::MatrixXd z(post.dim(), n);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < post.dim(); ++i) z(i, k) = g(rng);
  }
  return post.heads_from_normals(z);
}

struct WinProbStats {
  double mean = 0.5;
  double var = 0.0;
};

/// Monte Carlo mean and unbiased variance of sigma(w~^T (phi_a - phi_b)) over
/// n posterior heads.
template <typename Rng>
WinProbStats win_prob_stats(const LaplacePosterior& post, const Eigen::VectorXd& phi_a,
                            const Eigen::VectorXd& phi_b, int n_samples, Rng& rng) {
  if (n_samples < 2) throw ConfigError("win_prob_stats needs n_samples >= 2");
  require_dim(phi_a.size(), post.dim(), "win_prob_stats phi_a");
  require_dim(phi_b.size(), post.dim(), "win_prob_stats phi_b");
  const Eigen::VectorXd delta = phi_a - phi_b;
  const Eigen::MatrixXd heads = sample_heads(post, n_samples, rng);
  Eigen::ArrayXd p(n_samples);
  for (int k = 0; k < n_samples; ++k) p(k) = logistic(heads.col(k).dot(delta));
  WinProbStats s;
  s.mean = p.mean();
  s.var = (p - s.mean).square().sum() / static_cast<double>(n_samples - 1);
  return s;
}

}  // namespace bpl
