#pragma once

// Neural reward model trained on pairwise preferences with the Bradley-Terry
// logistic loss. The final layer is a linear head; its input (plus a constant
// 1 for the bias) is the feature map consumed by the last-layer posterior.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bpl/error.hpp"
#include "bpl/nn.hpp"

namespace bpl {

enum class PreferenceSource { synthetic, human };

inline std::string to_string(PreferenceSource s) {
  return s == PreferenceSource::human ? "human" : "synthetic";
}

struct PreferenceRecord {
  Eigen::VectorXd winner;
  Eigen::VectorXd loser;
  PreferenceSource source = PreferenceSource::synthetic;
  long iteration = 0;
};

/// Logistic function without overflow for large |z|.
inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

struct PairLoss {
  double loss = 0.0;
  double d_winner = 0.0;
  double d_loser = 0.0;
};

/// -log sigma(r_w - r_l) and its partial derivatives.
inline PairLoss bt_pair_loss(double r_winner, double r_loser) {
  if (!std::isfinite(r_winner) || !std::isfinite(r_loser)) {
    throw NumericalError("bt_pair_loss: non-finite score");
  }
  const double gap = r_winner - r_loser;
  const double miss = logistic(-gap);  // 1 - sigma(gap)
  return {softplus(-gap), -miss, miss};
}

struct RewardConfig {
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::tanh;
  double weight_decay = 1e-2;  // also the Laplace prior precision
  int epochs = 200;
  double learning_rate = 3e-3;
  // Optional input box; inputs are mapped affinely onto [-1, 1]^d.
  std::optional<Eigen::VectorXd> lower;
  std::optional<Eigen::VectorXd> upper;

  void validate() const {
    if (!(weight_decay > 0.0)) throw ConfigError("weight_decay (prior precision) must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    for (int w : hidden) {
      if (w < 1) throw ConfigError("hidden widths must be positive");
    }
    if (lower.has_value() != upper.has_value()) {
      throw ConfigError("reward input box needs both lower and upper");
    }
  }
};

class RewardModel {
 public:
  RewardModel() = default;
  RewardModel(DenseNet net, double prior_precision, Eigen::VectorXd shift, Eigen::VectorXd scale)
      : net_(std::move(net)),
        prior_precision_(prior_precision),
        shift_(std::move(shift)),
        scale_(std::move(scale)) {
    if (!(prior_precision_ > 0.0)) throw ConfigError("prior precision must be > 0");
    if (net_.output_dim() != 1) throw DimensionError("reward head must have one output");
    require_dim(shift_.size(), net_.input_dim(), "input shift");
    require_dim(scale_.size(), net_.input_dim(), "input scale");
  }

  static RewardModel initialize(int input_dim, const RewardConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<int> widths;
    widths.push_back(input_dim);
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(1);
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(input_dim);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(input_dim);
    if (cfg.lower) {
      require_dim(cfg.lower->size(), input_dim, "reward input box");
      require_dim(cfg.upper->size(), input_dim, "reward input box");
      shift = 0.5 * (*cfg.lower + *cfg.upper);
      scale = (2.0 / (*cfg.upper - *cfg.lower).array()).matrix();
    }
    return RewardModel(DenseNet::make(widths, cfg.activation, Activation::identity, seed),
                       cfg.weight_decay, std::move(shift), std::move(scale));
  }

  [[nodiscard]] const DenseNet& net() const { return net_; }
  [[nodiscard]] DenseNet& net() { return net_; }
  [[nodiscard]] double prior_precision() const { return prior_precision_; }
  [[nodiscard]] Eigen::Index input_dim() const { return net_.input_dim(); }
  /// Head length including the bias slot.
  [[nodiscard]] Eigen::Index feature_dim() const { return net_.feature_dim() + 1; }

  [[nodiscard]] Eigen::MatrixXd normalize(const Eigen::MatrixXd& xs) const {
    require_dim(xs.rows(), input_dim(), "reward model input");
    return ((xs.colwise() - shift_).array().colwise() * scale_.array()).matrix();
  }

  /// Head weights followed by the head bias.
  [[nodiscard]] Eigen::VectorXd head_weights() const {
    const auto& head = net_.layers().back();
    Eigen::VectorXd w(feature_dim());
    w.head(net_.feature_dim()) = head.weight.row(0).transpose();
    w(net_.feature_dim()) = head.bias(0);
    return w;
  }

  [[nodiscard]] double score(const Eigen::VectorXd& x) const {
    return net_forward(net_, normalize(x)).output(0);
  }

  /// Scores for each column of xs.
  [[nodiscard]] Eigen::VectorXd scores(const Eigen::MatrixXd& xs) const {
    return forward_batch(net_, normalize(xs)).output().row(0).transpose();
  }

 private:
  DenseNet net_;
  double prior_precision_ = 1e-2;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
};

/// phi(x): backbone output with a trailing constant 1.
inline Eigen::VectorXd reward_features(const RewardModel& model, const Eigen::VectorXd& x) {
  require_dim(x.size(), model.input_dim(), "reward_features input");
  const ForwardResult r = net_forward(model.net(), model.normalize(x));
  Eigen::VectorXd phi(model.feature_dim());
  phi.head(r.features.size()) = r.features;
  phi(r.features.size()) = 1.0;
  return phi;
}

/// Features for each column of xs, returned as columns.
inline Eigen::MatrixXd reward_features_batch(const RewardModel& model, const Eigen::MatrixXd& xs) {
  const BatchTrace t = forward_batch(model.net(), model.normalize(xs));
  Eigen::MatrixXd phi(model.feature_dim(), xs.cols());
  phi.topRows(model.feature_dim() - 1) = t.features();
  phi.bottomRows(1).setOnes();
  return phi;
}

namespace detail {

struct PairBatch {
  Eigen::MatrixXd winners;
  Eigen::MatrixXd losers;
};

inline PairBatch stack_pairs(std::span<const PreferenceRecord> data, const RewardModel& model) {
  const Eigen::Index d = model.input_dim();
  PairBatch b{Eigen::MatrixXd(d, static_cast<Eigen::Index>(data.size())),
              Eigen::MatrixXd(d, static_cast<Eigen::Index>(data.size()))};
  for (std::size_t k = 0; k < data.size(); ++k) {
    require_dim(data[k].winner.size(), d, "preference winner");
    require_dim(data[k].loser.size(), d, "preference loser");
    b.winners.col(static_cast<Eigen::Index>(k)) = data[k].winner;
    b.losers.col(static_cast<Eigen::Index>(k)) = data[k].loser;
  }
  b.winners = model.normalize(b.winners);
  b.losers = model.normalize(b.losers);
  return b;
}

}  // namespace detail

/// Mean Bradley-Terry loss plus (lambda/2)*|theta|^2, optionally with its gradient.
inline double reward_objective(const RewardModel& model, std::span<const PreferenceRecord> data,
                               Eigen::VectorXd* grad = nullptr) {
  const DenseNet& net = model.net();
  const Eigen::VectorXd theta = net.flat_params();
  const double lambda = model.prior_precision();
  double value = 0.5 * lambda * theta.squaredNorm();
  if (grad) *grad = lambda * theta;
  if (data.empty()) return value;
  const detail::PairBatch b = detail::stack_pairs(data, model);
  const BatchTrace tw = forward_batch(net, b.winners);
  const BatchTrace tl = forward_batch(net, b.losers);
  const auto n = static_cast<double>(data.size());
  Eigen::MatrixXd up_w(1, b.winners.cols());
  double loss_sum = 0.0;
  for (Eigen::Index k = 0; k < b.winners.cols(); ++k) {
    const PairLoss pl = bt_pair_loss(tw.output()(0, k), tl.output()(0, k));
    loss_sum += pl.loss;
    up_w(0, k) = pl.d_winner / n;
  }
  value += loss_sum / n;
  if (grad) {
    *grad += backward_batch(net, tw, up_w);
    *grad += backward_batch(net, tl, -up_w);
  }
  return value;
}

/// MAP fit of the reward model by full-batch Adam. Starts from `warm_start`
/// when given, otherwise from a seeded initialization. Returns the iterate with
/// the lowest objective seen, so the objective never rises above its start.
inline RewardModel fit_reward_map(std::span<const PreferenceRecord> data, const RewardConfig& cfg,
                                  std::uint64_t seed, const RewardModel* warm_start = nullptr) {
  if (data.empty()) throw ConfigError("fit_reward_map: empty preference dataset");
  cfg.validate();
  const auto d = static_cast<int>(data.front().winner.size());
  RewardModel model = warm_start ? *warm_start : RewardModel::initialize(d, cfg, seed);
  require_dim(model.input_dim(), d, "fit_reward_map candidate dimension");

  Eigen::VectorXd theta = model.net().flat_params();
  Eigen::VectorXd best_theta = theta;
  double best = std::numeric_limits<double>::infinity();
  OptimizerState opt(theta.size(), AdamConfig{.learning_rate = cfg.learning_rate});
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    model.net().set_flat_params(theta);
    const double value = reward_objective(model, data, &grad);
    if (!std::isfinite(value)) {
      throw NumericalError("fit_reward_map: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (value < best) {
      best = value;
      best_theta = theta;
    }
    if (epoch == cfg.epochs || grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
    opt_step(theta, grad, opt);
  }
  model.net().set_flat_params(best_theta);
  return model;
}

/// Fraction of pairs whose winner receives the strictly higher score.
inline double pair_accuracy(const RewardModel& model, std::span<const PreferenceRecord> pairs) {
  if (pairs.empty()) return 0.0;
  const detail::PairBatch b = detail::stack_pairs(pairs, model);
  const Eigen::MatrixXd sw = forward_batch(model.net(), b.winners).output();
  const Eigen::MatrixXd sl = forward_batch(model.net(), b.losers).output();
  return static_cast<double>((sw.array() > sl.array()).count()) /
         static_cast<double>(pairs.size());
}

// ---- line-oriented JSON for preference datasets ----

inline nlohmann::json to_json(const PreferenceRecord& r) {
  return {{"winner", std::vector<double>(r.winner.begin(), r.winner.end())},
          {"loser", std::vector<double>(r.loser.begin(), r.loser.end())},
          {"source", to_string(r.source)},
          {"iteration", r.iteration}};
}

inline PreferenceRecord preference_from_json(const nlohmann::json& j) {
  PreferenceRecord r;
  const auto w = j.at("winner").get<std::vector<double>>();
  const auto l = j.at("loser").get<std::vector<double>>();
  r.winner = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  r.loser = Eigen::Map<const Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
  const auto src = j.at("source").get<std::string>();
  if (src != "synthetic" && src != "human") throw ConfigError("unknown source '" + src + "'");
  r.source = src == "human" ? PreferenceSource::human : PreferenceSource::synthetic;
  r.iteration = j.at("iteration").get<long>();
  if (r.iteration < 0) throw ConfigError("negative preference iteration");
  return r;
}

inline void write_preferences_jsonl(std::ostream& out, std::span<const PreferenceRecord> data) {
  for (const auto& r : data) out << to_json(r).dump() << '\n';
}

inline std::vector<PreferenceRecord> read_preferences_jsonl(std::istream& in) {
  std::vector<PreferenceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(preference_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace bpl
