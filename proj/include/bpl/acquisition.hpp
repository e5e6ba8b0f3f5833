#pragma once

// Dueling Thompson sampling: the "best" candidate maximizes one posterior
// utility draw, the "rival" is chosen by sparring (softmax over predicted
// scores), maxvar (largest posterior variance of the win probability against
// the best), or the mixed rule that blends the two after z-scoring each
// family over the non-best pool.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bpl/error.hpp"
#include "bpl/laplace.hpp"
#include "bpl/reward_model.hpp"

namespace bpl {

enum class AcqMode { sparring, maxvar, mixed };

inline std::string to_string(AcqMode m) {
  switch (m) {
    case AcqMode::sparring: return "sparring";
    case AcqMode::maxvar: return "maxvar";
    case AcqMode::mixed: return "mixed";
  }
  return "?";
}

inline AcqMode acq_mode_from_string(const std::string& s) {
  if (s == "sparring") return AcqMode::sparring;
  if (s == "maxvar") return AcqMode::maxvar;
  if (s == "mixed") return AcqMode::mixed;
  throw ConfigError("unknown acquisition mode '" + s + "'");
}

struct AcqConfig {
  double alpha = 0.5;
  double temperature = 1.0;
  int pool_size = 32;
  int mc_samples = 256;
  AcqMode mode = AcqMode::mixed;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (pool_size < 2) throw ConfigError("pool_size must be >= 2");
    if (mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
  }
};

struct DuelQuery {
  long id = -1;
  int best = 0;
  int rival = 1;
  Eigen::VectorXd first;   // pool[best]
  Eigen::VectorXd second;  // pool[rival]
  AcqMode mode = AcqMode::mixed;
  double alpha = 0.5;
  double temperature = 1.0;
  // Per pool member. Entries at `best` are NaN for the rival-only scores.
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> s_spar;
  std::vector<double> s_var;
  std::vector<double> j_alpha;
};

/// Index of the first maximum; ties go to the lowest index. `skip` is excluded.
inline int argmax_excluding(std::span<const double> v, int skip) {
  int arg = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i == skip) continue;
    if (arg < 0 || v[static_cast<std::size_t>(i)] > best) {
      arg = i;
      best = v[static_cast<std::size_t>(i)];
    }
  }
  if (arg < 0) throw DimensionError("argmax over an empty candidate set");
  return arg;
}

/// argmax_i of one posterior utility draw.
inline int argmax_utility(const Eigen::VectorXd& utilities) {
  if (utilities.size() == 0) throw DimensionError("thompson_best: empty pool");
  return argmax_excluding(std::span<const double>(utilities.data(), utilities.size()), -1);
}

/// Samples one head and returns argmax_i w~^T phi_i over the feature columns.
template <typename Rng>
int thompson_best(const LaplacePosterior& post, const Eigen::MatrixXd& features, Rng& rng) {
  if (features.cols() == 0) throw DimensionError("thompson_best: empty pool");
  require_dim(features.rows(), post.dim(), "thompson_best features");
  const Eigen::VectorXd head = sample_head(post, rng);
  return argmax_utility(features.transpose() * head);
}

/// Draws a rival i != best with probability proportional to exp(s_i / T).
template <typename Rng>
int sparring_rival(std::span<const double> scores, double temperature, int best, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("sparring temperature must be > 0");
  const int m = static_cast<int>(scores.size());
  if (m < 2) throw DimensionError("sparring_rival needs a pool of at least 2");
  if (best < 0 || best >= m) throw DimensionError("sparring_rival: best index out of range");
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    if (i != best) top = std::max(top, scores[static_cast<std::size_t>(i)]);
  }
  std::vector<double> weights(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    if (i != best) {
      weights[static_cast<std::size_t>(i)] =
          std::exp((scores[static_cast<std::size_t>(i)] - top) / temperature);
    }
  }
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return pick(rng);
}

inline int maxvar_rival(std::span<const double> vars, int best) {
  if (vars.size() < 2) throw DimensionError("maxvar_rival needs a pool of at least 2");
  return argmax_excluding(vars, best);
}

struct MixedChoice {
  int rival = -1;
  std::vector<double> j_alpha;  // NaN at `best`
};

namespace detail {

// (v - mean) / std over the non-best entries, population std; a degenerate
// family (std < 1e-12) standardizes to 0.
inline std::vector<double> zscore_excluding(std::span<const double> v, int skip) {
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i != skip) {
      sum += v[static_cast<std::size_t>(i)];
      ++n;
    }
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i != skip) ss += std::pow(v[static_cast<std::size_t>(i)] - mean, 2);
  }
  const double sd = std::sqrt(ss / n);
  std::vector<double> z(v.size(), 0.0);
  if (sd < 1e-12) return z;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (i != skip) z[static_cast<std::size_t>(i)] = (v[static_cast<std::size_t>(i)] - mean) / sd;
  }
  return z;
}

}  // namespace detail

/// argmax over i != best of alpha * z(S_spar)_i + (1 - alpha) * z(S_var)_i.
inline MixedChoice mixed_rival(std::span<const double> s_spar, std::span<const double> s_var,
                               double alpha, int best) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  require_dim(static_cast<long>(s_var.size()), static_cast<long>(s_spar.size()),
              "mixed_rival score lists");
  if (s_spar.size() < 2) throw DimensionError("mixed_rival needs a pool of at least 2");
  const auto zs = detail::zscore_excluding(s_spar, best);
  const auto zv = detail::zscore_excluding(s_var, best);
  MixedChoice out;
  out.j_alpha.resize(s_spar.size());
  for (std::size_t i = 0; i < s_spar.size(); ++i) {
    out.j_alpha[i] = alpha * zs[i] + (1.0 - alpha) * zv[i];
  }
  out.rival = argmax_excluding(out.j_alpha, best);
  if (best >= 0 && best < static_cast<int>(out.j_alpha.size())) {
    out.j_alpha[static_cast<std::size_t>(best)] = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// Surrogate-agnostic selection. `thompson` is one joint utility draw over the
/// pool, `draws` holds n further joint draws (rows) used for the win-probability
/// variance, and `link` maps a utility gap to a win probability.
template <typename Rng>
DuelQuery select_from_draws(const Eigen::VectorXd& mean, const Eigen::VectorXd& var,
                            const Eigen::VectorXd& thompson, const Eigen::MatrixXd& draws,
                            const std::function<double(double)>& link, const AcqConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  const auto m = static_cast<int>(mean.size());
  if (m < 2) throw DimensionError("select_duel needs at least 2 candidates");
  require_dim(var.size(), m, "select_duel variances");
  require_dim(thompson.size(), m, "select_duel thompson draw");
  require_dim(draws.cols(), m, "select_duel utility draws");
  DuelQuery q;
  q.mode = cfg.mode;
  q.alpha = cfg.alpha;
  q.temperature = cfg.temperature;
  q.best = argmax_utility(thompson);
  q.mean.assign(mean.begin(), mean.end());
  q.var.assign(var.begin(), var.end());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  q.s_spar = q.mean;
  q.s_spar[static_cast<std::size_t>(q.best)] = nan;
  q.s_var.assign(static_cast<std::size_t>(m), nan);
  const auto n = draws.rows();
  Eigen::ArrayXd p(n);
  for (int i = 0; i < m; ++i) {
    if (i == q.best) continue;
    for (Eigen::Index k = 0; k < n; ++k) p(k) = link(draws(k, q.best) - draws(k, i));
    const double pm = p.mean();
    q.s_var[static_cast<std::size_t>(i)] =
        (p - pm).square().sum() / static_cast<double>(n - 1);
  }
  const MixedChoice mixed = mixed_rival(q.s_spar, q.s_var, cfg.alpha, q.best);
  q.j_alpha = mixed.j_alpha;
  switch (cfg.mode) {
    case AcqMode::sparring:
      q.rival = sparring_rival(q.s_spar, cfg.temperature, q.best, rng);
      break;
    case AcqMode::maxvar:
      q.rival = maxvar_rival(q.s_var, q.best);
      break;
    case AcqMode::mixed:
      q.rival = mixed.rival;
      break;
  }
  return q;
}

/// Full dueling-Thompson selection over a candidate pool (columns) under the
/// last-layer Laplace posterior. S_spar is the posterior-mean utility and
/// S_var the win-probability variance against the best, estimated from one
/// shared set of cfg.mc_samples heads.
template <typename Rng>
DuelQuery select_duel(const LaplacePosterior& post, const RewardModel& model,
                      const Eigen::MatrixXd& candidates, const AcqConfig& cfg, Rng& rng) {
  cfg.validate();
  if (candidates.cols() < 2) throw DimensionError("select_duel needs at least 2 candidates");
  const Eigen::MatrixXd phi = reward_features_batch(model, candidates);
  const Eigen::VectorXd mean = phi.transpose() * post.w_map();
  const Eigen::VectorXd var = post.whiten(phi).colwise().squaredNorm().transpose();
  const Eigen::VectorXd thompson = phi.transpose() * sample_head(post, rng);
  const Eigen::MatrixXd draws = sample_heads(post, cfg.mc_samples, rng).transpose() * phi;
  DuelQuery q = select_from_draws(mean, var, thompson, draws, logistic, cfg, rng);
  q.first = candidates.col(q.best);
  q.second = candidates.col(q.rival);
  return q;
}

inline nlohmann::json to_json(const DuelQuery& q) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); };
  auto at = [](const std::vector<double>& v, int i) {
    return i >= 0 && i < static_cast<int>(v.size()) ? v[static_cast<std::size_t>(i)] : 0.0;
  };
  nlohmann::json j;
  j["duel_id"] = q.id;
  j["best"] = q.best;
  j["rival"] = q.rival;
  j["first"] = vec(q.first);
  j["second"] = vec(q.second);
  j["first_posterior"] = {{"mean", at(q.mean, q.best)}, {"var", at(q.var, q.best)}};
  j["second_posterior"] = {{"mean", at(q.mean, q.rival)}, {"var", at(q.var, q.rival)}};
  j["mode"] = to_string(q.mode);
  j["alpha"] = q.alpha;
  j["temperature"] = q.temperature;
  // NaN entries (the best's rival scores) become null.
  auto nullable = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  j["mean"] = nullable(q.mean);
  j["var"] = nullable(q.var);
  j["s_spar"] = nullable(q.s_spar);
  j["s_var"] = nullable(q.s_var);
  j["j_alpha"] = nullable(q.j_alpha);
  return j;
}

}  // namespace bpl
