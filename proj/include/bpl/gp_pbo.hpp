#pragma once

// Preferential GP baseline: latent utility with a Matern-5/2 prior, probit
// preference likelihood and a Newton-Laplace posterior.
//
// With m preference pairs over n points, the negative log-likelihood Hessian
// is W = L^T L where row p of L is sqrt(D_p) (e_winner - e_loser). Newton
// steps and predictions go through B = I_m + L K L^T, which is SPD for any
// PSD K, so K itself is never inverted:
//   (K^-1 + W)^-1 = K - K L^T B^-1 L K.
// Every refit factorizes B, an m x m matrix: the cost is cubic in the
// number of queries.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "bpl/acquisition.hpp"
#include "bpl/error.hpp"
#include "bpl/oracle.hpp"

namespace bpl {

inline double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double length_scale,
                       double signal_variance) {
  require_dim(b.size(), a.size(), "matern52 inputs");
  const double s = std::sqrt(5.0) * (a - b).norm() / length_scale;
  return signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

struct GpHyper {
  double length_scale = 1.0;  // absolute
  double signal_variance = 1.0;
  double noise = 0.1;  // probit sigma_n
  double jitter = 1e-8;

  void validate() const {
    if (!(length_scale > 0.0)) throw ConfigError("GP length scale must be > 0");
    if (!(signal_variance > 0.0)) throw ConfigError("GP signal variance must be > 0");
    if (!(noise > 0.0)) throw ConfigError("GP preference noise must be > 0");
    if (!(jitter >= 0.0)) throw ConfigError("GP jitter must be >= 0");
  }
};

struct IndexPair {
  int winner = 0;
  int loser = 0;
};

/// Kernel matrix between the columns of xa and xb.
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb,
                                     const GpHyper& h) {
  Eigen::MatrixXd k(xa.cols(), xb.cols());
  for (Eigen::Index j = 0; j < xb.cols(); ++j) {
    for (Eigen::Index i = 0; i < xa.cols(); ++i) {
      k(i, j) = matern52(xa.col(i), xb.col(j), h.length_scale, h.signal_variance);
    }
  }
  return k;
}

/// phi(z) / Phi(z), stable for very negative z.
inline double inverse_mills(double z) {
  if (z > -30.0) return std::exp(std::log(normal_pdf(z)) - std::log(normal_cdf(z)));
  const double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

/// log Phi(z), stable for very negative z.
inline double log_normal_cdf(double z) {
  if (z > -30.0) return std::log(normal_cdf(z));
  const double z2 = z * z;
  return -0.5 * z2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-z) +
         std::log(1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

/// Probit preference log-likelihood sum_p log Phi((f_w - f_l) / (sqrt2 sigma)).
inline double preference_log_likelihood(const Eigen::VectorXd& f, std::span<const IndexPair> pairs,
                                        double noise) {
  const double c = std::numbers::sqrt2 * noise;
  double ll = 0.0;
  for (const auto& p : pairs) ll += log_normal_cdf((f(p.winner) - f(p.loser)) / c);
  return ll;
}

struct GpFit {
  Eigen::MatrixXd points;  // d x n, columns are points
  std::vector<IndexPair> pairs;
  GpHyper hyper;
  Eigen::MatrixXd kernel;     // K + jitter I
  Eigen::VectorXd f_map;      // n
  Eigen::VectorXd alpha;      // K^-1 f_map
  Eigen::VectorXd curv_sqrt;  // sqrt(D_p), m
  Eigen::LLT<Eigen::MatrixXd> b_llt;  // I + L K L^T
  double jitter = 0.0;
  double stationarity = 0.0;  // |grad loglik - K^-1 f|_inf at return
  int iterations = 0;

  [[nodiscard]] Eigen::Index num_points() const { return points.cols(); }

  /// Dense likelihood curvature W = L^T L (n x n).
  [[nodiscard]] Eigen::MatrixXd curvature() const {
    const Eigen::Index n = num_points();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const double d = curv_sqrt(static_cast<Eigen::Index>(p)) * curv_sqrt(static_cast<Eigen::Index>(p));
      const int a = pairs[p].winner;
      const int b = pairs[p].loser;
      w(a, a) += d;
      w(b, b) += d;
      w(a, b) -= d;
      w(b, a) -= d;
    }
    return w;
  }

  /// L v for an n-vector (or each column of an n x k matrix).
  [[nodiscard]] Eigen::MatrixXd apply_l(const Eigen::MatrixXd& v) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(pairs.size()), v.cols());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      out.row(static_cast<Eigen::Index>(p)) =
          curv_sqrt(static_cast<Eigen::Index>(p)) * (v.row(pairs[p].winner) - v.row(pairs[p].loser));
    }
    return out;
  }
};

namespace detail {

struct LikelihoodTerms {
  Eigen::VectorXd grad;       // n
  Eigen::VectorXd curv_sqrt;  // m
};

inline LikelihoodTerms likelihood_terms(const Eigen::VectorXd& f, std::span<const IndexPair> pairs,
                                        double noise) {
  const double c = std::numbers::sqrt2 * noise;
  LikelihoodTerms t{Eigen::VectorXd::Zero(f.size()),
                    Eigen::VectorXd(static_cast<Eigen::Index>(pairs.size()))};
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double z = (f(pairs[p].winner) - f(pairs[p].loser)) / c;
    const double r = inverse_mills(z);
    t.grad(pairs[p].winner) += r / c;
    t.grad(pairs[p].loser) -= r / c;
    t.curv_sqrt(static_cast<Eigen::Index>(p)) = std::sqrt(std::max(r * (z + r), 0.0)) / c;
  }
  return t;
}

// B = I + L K L^T with L given by pairs and curv_sqrt.
inline Eigen::MatrixXd b_matrix(const Eigen::MatrixXd& kernel, std::span<const IndexPair> pairs,
                                const Eigen::VectorXd& s) {
  const auto m = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd lk(m, kernel.cols());
  for (Eigen::Index p = 0; p < m; ++p) {
    const auto& pr = pairs[static_cast<std::size_t>(p)];
    lk.row(p) = s(p) * (kernel.row(pr.winner) - kernel.row(pr.loser));
  }
  Eigen::MatrixXd b(m, m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const auto& pr = pairs[static_cast<std::size_t>(q)];
    b.col(q) = s(q) * (lk.col(pr.winner) - lk.col(pr.loser));
  }
  b.diagonal().array() += 1.0;
  return b;
}

}  // namespace detail

/// Newton-Laplace fit of the latent utilities at the columns of `points`.
/// `kernel` may pass a precomputed jitter-free K; `alpha_init` warm-starts
/// Newton at f = K alpha_init.
inline GpFit gp_laplace_fit(const Eigen::MatrixXd& points, std::span<const IndexPair> pairs,
                            const GpHyper& hyper, const Eigen::MatrixXd* kernel = nullptr,
                            const Eigen::VectorXd* alpha_init = nullptr) {
  hyper.validate();
  const Eigen::Index n = points.cols();
  if (n < 2) throw DimensionError("gp_laplace_fit needs at least 2 points");
  for (const auto& p : pairs) {
    if (p.winner < 0 || p.winner >= n || p.loser < 0 || p.loser >= n) {
      throw DimensionError("gp_laplace_fit: pair index out of range");
    }
    if (p.winner == p.loser) throw ConfigError("gp_laplace_fit: pair compares a point with itself");
  }
  GpFit fit;
  fit.points = points;
  fit.pairs.assign(pairs.begin(), pairs.end());
  fit.hyper = hyper;
  Eigen::MatrixXd k0;
  if (kernel) {
    require_dim(kernel->rows(), n, "gp kernel rows");
    require_dim(kernel->cols(), n, "gp kernel cols");
    k0 = *kernel;
  } else {
    k0 = kernel_matrix(points, points, hyper);
  }

  const auto m = static_cast<Eigen::Index>(pairs.size());
  for (double jitter = std::max(hyper.jitter, 1e-8); jitter <= 1e-4 * (1.0 + 1e-9);
       jitter *= 10.0) {
    fit.jitter = jitter;
    fit.kernel = k0;
    fit.kernel.diagonal().array() += jitter;
    const Eigen::MatrixXd& kk = fit.kernel;

    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    if (m == 0) {
      fit.f_map = f;
      fit.alpha = a;
      fit.curv_sqrt.resize(0);
      fit.b_llt.compute(Eigen::MatrixXd(0, 0));
      fit.stationarity = 0.0;
      return fit;
    }
    if (alpha_init) {
      require_dim(alpha_init->size(), n, "gp warm start");
      a = *alpha_init;
      f = kk * a;
    }
    auto psi = [&](const Eigen::VectorXd& ff, const Eigen::VectorXd& aa) {
      return preference_log_likelihood(ff, pairs, hyper.noise) - 0.5 * aa.dot(ff);
    };

    bool factor_ok = true;
    int it = 0;
    double obj = psi(f, a);
    for (; it < 100; ++it) {
      const auto terms = detail::likelihood_terms(f, pairs, hyper.noise);
      fit.curv_sqrt = terms.curv_sqrt;
      Eigen::LLT<Eigen::MatrixXd> llt(detail::b_matrix(kk, pairs, terms.curv_sqrt));
      if (llt.info() != Eigen::Success) {
        factor_ok = false;
        break;
      }
      // b = W f + g; a_new = b - L^T B^-1 L K b; f_new = K a_new.
      const Eigen::VectorXd lf = fit.apply_l(f);
      Eigen::VectorXd b = terms.grad;
      for (Eigen::Index p = 0; p < m; ++p) {
        const auto& pr = pairs[static_cast<std::size_t>(p)];
        const double v = terms.curv_sqrt(p) * lf(p);
        b(pr.winner) += v;
        b(pr.loser) -= v;
      }
      const Eigen::VectorXd kb = kk * b;
      const Eigen::VectorXd y = llt.solve(fit.apply_l(kb));
      Eigen::VectorXd a_new = b;
      for (Eigen::Index p = 0; p < m; ++p) {
        const auto& pr = pairs[static_cast<std::size_t>(p)];
        a_new(pr.winner) -= terms.curv_sqrt(p) * y(p);
        a_new(pr.loser) += terms.curv_sqrt(p) * y(p);
      }
      Eigen::VectorXd f_new = kk * a_new;

      // Damped step: halve until the log posterior does not decrease.
      double step = 1.0;
      Eigen::VectorXd f_try = f_new;
      Eigen::VectorXd a_try = a_new;
      double obj_try = psi(f_try, a_try);
      for (int h = 0; h < 30 && obj_try < obj - 1e-12 * (1.0 + std::abs(obj)); ++h) {
        step *= 0.5;
        f_try = f + step * (f_new - f);
        a_try = a + step * (a_new - a);
        obj_try = psi(f_try, a_try);
      }
      const double change = (f_try - f).lpNorm<Eigen::Infinity>();
      f = std::move(f_try);
      a = std::move(a_try);
      obj = obj_try;
      if (change < 1e-8) {
        ++it;
        break;
      }
    }
    if (!factor_ok) continue;

    const auto terms = detail::likelihood_terms(f, pairs, hyper.noise);
    fit.curv_sqrt = terms.curv_sqrt;
    fit.b_llt.compute(detail::b_matrix(kk, pairs, terms.curv_sqrt));
    if (fit.b_llt.info() != Eigen::Success) continue;
    fit.f_map = f;
    fit.alpha = a;
    fit.iterations = it;
    fit.stationarity = (terms.grad - a).lpNorm<Eigen::Infinity>();
    return fit;
  }
  throw NumericalError("gp_laplace_fit: factorization failed after jitter escalation to 1e-4");
}

/// Laplace-GP predictive mean and variance at x.
inline Predictive gp_predict(const GpFit& fit, const Eigen::VectorXd& x) {
  require_dim(x.size(), fit.points.rows(), "gp_predict input");
  const Eigen::VectorXd ks = kernel_matrix(fit.points, x, fit.hyper).col(0);
  Predictive out;
  out.mean = ks.dot(fit.alpha);
  double reduction = 0.0;
  if (!fit.pairs.empty()) {
    const Eigen::VectorXd v = fit.b_llt.matrixL().solve(fit.apply_l(ks));
    reduction = v.squaredNorm();
  }
  out.var = std::max(fit.hyper.signal_variance - reduction, 0.0);
  return out;
}

struct JointPredictive {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Joint Laplace-GP posterior over the columns of xs.
inline JointPredictive gp_predict_joint(const GpFit& fit, const Eigen::MatrixXd& xs) {
  require_dim(xs.rows(), fit.points.rows(), "gp_predict_joint input");
  const Eigen::MatrixXd ks = kernel_matrix(fit.points, xs, fit.hyper);
  JointPredictive out;
  out.mean = ks.transpose() * fit.alpha;
  out.cov = kernel_matrix(xs, xs, fit.hyper);
  if (!fit.pairs.empty()) {
    const Eigen::MatrixXd v = fit.b_llt.matrixL().solve(fit.apply_l(ks));
    out.cov.noalias() -= v.transpose() * v;
  }
  return out;
}

/// Draws joint samples (rows) from N(mean, cov) with escalating diagonal jitter.
template <typename Rng>
Eigen::MatrixXd sample_joint(const JointPredictive& jp, int n, Rng& rng) {
  const Eigen::Index m = jp.mean.size();
  Eigen::MatrixXd cov = 0.5 * (jp.cov + jp.cov.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 1e-10 * std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (int attempt = 0; attempt < 12; ++attempt, jitter *= 10.0) {
    llt.compute(cov + jitter * Eigen::MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) break;
  }
  if (llt.info() != Eigen::Success) throw NumericalError("sample_joint: covariance not PSD");
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd z(m, n);
  for (int k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < m; ++i) z(i, k) = g(rng);
  }
  Eigen::MatrixXd draws = llt.matrixL() * z;
  draws.colwise() += jp.mean;
  return draws.transpose();
}

struct PboConfig {
  GpHyper hyper;
  AcqConfig acq;
  std::size_t max_kernel_bytes = std::size_t{2} << 30;
};

enum class PboStatus { ok, budget, memory };

struct PboState {
  ProblemSpec problem;
  PboConfig cfg;
  Eigen::MatrixXd points;           // d x n
  Eigen::MatrixXd kernel;           // jitter-free K over points
  std::vector<IndexPair> pairs;
  std::optional<GpFit> fit;
  long queries = 0;
  long budget = 0;
  double best_utility = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_point;

  PboState(ProblemSpec p, PboConfig c, long query_budget)
      : problem(std::move(p)), cfg(c), points(problem.dim, 0), budget(query_budget) {
    problem.validate();
    cfg.hyper.validate();
    cfg.acq.validate();
  }
};

struct PboStep {
  PboStatus status = PboStatus::ok;
  DuelQuery query;
  Preference answer = Preference::first;
  double refit_ms = 0.0;
};

/// Answers a duel between query.first and query.second.
using DuelOracle = std::function<Preference(const DuelQuery& query)>;

/// One PBO query: uniform pool, dueling-Thompson selection under the current
/// Laplace-GP posterior (prior when no pairs yet), oracle answer, refit.
template <typename Rng>
PboStep pbo_iterate(PboState& state, const DuelOracle& oracle, Rng& rng) {
  PboStep step;
  if (state.queries >= state.budget) {
    step.status = PboStatus::budget;
    return step;
  }
  const Eigen::Index n_next = state.points.cols() + 2;
  const auto bytes = static_cast<double>(n_next) * static_cast<double>(n_next) * sizeof(double);
  if (bytes > static_cast<double>(state.cfg.max_kernel_bytes)) {
    step.status = PboStatus::memory;
    return step;
  }

  const int m = state.cfg.acq.pool_size;
  const auto& prob = state.problem;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pool(prob.dim, m);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < prob.dim; ++i) {
      pool(i, k) = prob.lower(i) + (prob.upper(i) - prob.lower(i)) * u(rng);
    }
  }

  JointPredictive jp;
  if (state.fit) {
    jp = gp_predict_joint(*state.fit, pool);
  } else {
    jp.mean = Eigen::VectorXd::Zero(m);
    jp.cov = kernel_matrix(pool, pool, state.cfg.hyper);
  }
  const Eigen::VectorXd thompson = sample_joint(jp, 1, rng).row(0).transpose();
  const Eigen::MatrixXd draws = sample_joint(jp, state.cfg.acq.mc_samples, rng);
  const double c = std::numbers::sqrt2 * state.cfg.hyper.noise;
  step.query = select_from_draws(
      jp.mean, jp.cov.diagonal(), thompson, draws, [c](double gap) { return normal_cdf(gap / c); },
      state.cfg.acq, rng);
  step.query.first = pool.col(step.query.best);
  step.query.second = pool.col(step.query.rival);
  step.answer = oracle(step.query);
  state.queries += 1;

  for (const auto* x : {&step.query.first, &step.query.second}) {
    const double util = latent_utility(prob, *x);
    if (util > state.best_utility) {
      state.best_utility = util;
      state.best_point = *x;
    }
  }

  // Append both points. Extending alpha with zeros keeps the old latents and
  // starts the new ones at their predictive mean.
  const Eigen::Index n = state.points.cols();
  Eigen::VectorXd alpha_init = Eigen::VectorXd::Zero(n + 2);
  if (state.fit) alpha_init.head(n) = state.fit->alpha;

  const auto t0 = std::chrono::steady_clock::now();
  state.points.conservativeResize(Eigen::NoChange, n + 2);
  state.points.col(n) = step.query.first;
  state.points.col(n + 1) = step.query.second;
  const Eigen::MatrixXd cross = kernel_matrix(state.points, state.points.rightCols(2), state.cfg.hyper);
  state.kernel.conservativeResize(n + 2, n + 2);
  state.kernel.rightCols(2) = cross;
  state.kernel.bottomRows(2) = cross.transpose();
  const int w = step.answer == Preference::first ? static_cast<int>(n) : static_cast<int>(n + 1);
  const int l = step.answer == Preference::first ? static_cast<int>(n + 1) : static_cast<int>(n);
  state.pairs.push_back({w, l});
  state.fit = gp_laplace_fit(state.points, state.pairs, state.cfg.hyper, &state.kernel, &alpha_init);
  step.refit_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return step;
}

}  // namespace bpl
