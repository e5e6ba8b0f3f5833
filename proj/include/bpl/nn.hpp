#pragma once

// Dense feed-forward networks with exact reverse-mode gradients and an Adam
// optimizer. Everything is double precision; the last-layer Hessian work
// downstream is ill-conditioned in single precision.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpl/error.hpp"

namespace bpl {

enum class Activation { tanh, relu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace detail {

template <typename Derived>
void apply_activation(Activation a, Eigen::MatrixBase<Derived>& z) {
  switch (a) {
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::identity: break;
  }
}

// Derivative expressed through the post-activation value.
inline Eigen::MatrixXd activation_slope(Activation a, const Eigen::MatrixXd& post) {
  switch (a) {
    case Activation::tanh: return (1.0 - post.array().square()).matrix();
    case Activation::relu: return (post.array() > 0.0).cast<double>().matrix();
    case Activation::identity: break;
  }
  return Eigen::MatrixXd::Ones(post.rows(), post.cols());
}

}  // namespace detail

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::identity;

  [[nodiscard]] Eigen::Index in_dim() const { return weight.cols(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weight.rows(); }
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw DimensionError("DenseNet needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      require_dim(l.bias.size(), l.out_dim(), "layer bias");
      if (k > 0) require_dim(l.in_dim(), layers_[k - 1].out_dim(), "layer input");
    }
  }

  /// Builds a network with the given layer widths (input first, output last).
  /// Weights and biases are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static DenseNet make(std::span<const int> widths, Activation hidden, Activation output,
                       std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("DenseNet needs input and output widths");
    for (int w : widths) {
      if (w < 1) throw ConfigError("layer widths must be positive");
    }
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
      const int in = widths[k];
      const int out = widths[k + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      DenseLayer l;
      l.weight.resize(out, in);
      l.bias.resize(out);
      for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) l.weight(i, j) = u(rng);
      }
      for (int i = 0; i < out; ++i) l.bias(i) = u(rng);
      l.activation = (k + 2 == widths.size()) ? output : hidden;
      layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
  }

  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() { return layers_; }
  [[nodiscard]] std::size_t num_layers() const { return layers_.size(); }
  [[nodiscard]] Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  [[nodiscard]] Eigen::Index output_dim() const { return layers_.back().out_dim(); }
  /// Width of the penultimate activation, i.e. the input of the last layer.
  [[nodiscard]] Eigen::Index feature_dim() const { return layers_.back().in_dim(); }

  [[nodiscard]] Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Layer by layer: weight (column-major) then bias.
  [[nodiscard]] Eigen::VectorXd flat_params() const {
    Eigen::VectorXd p(parameter_count());
    Eigen::Index at = 0;
    for (const auto& l : layers_) {
      p.segment(at, l.weight.size()) = l.weight.reshaped();
      at += l.weight.size();
      p.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
    return p;
  }

  void set_flat_params(const Eigen::VectorXd& p) {
    require_dim(p.size(), parameter_count(), "flat parameter vector");
    Eigen::Index at = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = p.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = p.segment(at, l.bias.size());
      at += l.bias.size();
    }
  }

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardResult {
  Eigen::VectorXd features;  // penultimate activation
  Eigen::VectorXd output;
};

inline ForwardResult net_forward(const DenseNet& net, const Eigen::VectorXd& x) {
  require_dim(x.size(), net.input_dim(), "net_forward input");
  ForwardResult r;
  Eigen::VectorXd a = x;
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (k + 1 == layers.size()) r.features = a;
    Eigen::VectorXd z = layers[k].weight * a + layers[k].bias;
    detail::apply_activation(layers[k].activation, z);
    a = std::move(z);
  }
  r.output = std::move(a);
  return r;
}

/// Activations of a batched forward pass; columns are samples.
/// activations[0] is the input, activations[k] the output of layer k-1.
struct BatchTrace {
  std::vector<Eigen::MatrixXd> activations;

  [[nodiscard]] const Eigen::MatrixXd& output() const { return activations.back(); }
  [[nodiscard]] const Eigen::MatrixXd& features() const {
    return activations[activations.size() - 2];
  }
};

inline BatchTrace forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  require_dim(inputs.rows(), net.input_dim(), "forward_batch input");
  BatchTrace t;
  t.activations.reserve(net.num_layers() + 1);
  t.activations.push_back(inputs);
  for (const auto& l : net.layers()) {
    Eigen::MatrixXd z = l.weight * t.activations.back();
    z.colwise() += l.bias;
    detail::apply_activation(l.activation, z);
    t.activations.push_back(std::move(z));
  }
  return t;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::VectorXd input;

  /// Same ordering as DenseNet::flat_params.
  [[nodiscard]] Eigen::VectorXd flat() const {
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < weight.size(); ++k) n += weight[k].size() + bias[k].size();
    Eigen::VectorXd g(n);
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      g.segment(at, weight[k].size()) = weight[k].reshaped();
      at += weight[k].size();
      g.segment(at, bias[k].size()) = bias[k];
      at += bias[k].size();
    }
    return g;
  }
};

namespace detail {

// Shared reverse sweep. Accumulates parameter gradients summed over columns
// into `flat` (when non-null) and returns the gradient w.r.t. the inputs.
inline Eigen::MatrixXd reverse_sweep(const DenseNet& net, const BatchTrace& trace,
                                     const Eigen::MatrixXd& upstream, Gradients* per_layer,
                                     Eigen::VectorXd* flat) {
  const auto& layers = net.layers();
  const std::size_t n_layers = layers.size();
  Eigen::MatrixXd delta = upstream;
  std::vector<Eigen::Index> offsets(n_layers);
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < n_layers; ++k) {
    offsets[k] = at;
    at += layers[k].weight.size() + layers[k].bias.size();
  }
  if (per_layer) {
    per_layer->weight.resize(n_layers);
    per_layer->bias.resize(n_layers);
  }
  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& l = layers[k];
    // Through the activation of layer k.
    delta = delta.cwiseProduct(activation_slope(l.activation, trace.activations[k + 1]));
    Eigen::MatrixXd dW = delta * trace.activations[k].transpose();
    Eigen::VectorXd db = delta.rowwise().sum();
    if (flat) {
      flat->segment(offsets[k], dW.size()) += dW.reshaped();
      flat->segment(offsets[k] + dW.size(), db.size()) += db;
    }
    if (per_layer) {
      per_layer->weight[k] = std::move(dW);
      per_layer->bias[k] = std::move(db);
    }
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

}  // namespace detail

/// Exact gradients of upstream^T * output w.r.t. every parameter and the input.
inline Gradients net_backward(const DenseNet& net, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& upstream) {
  require_dim(x.size(), net.input_dim(), "net_backward input");
  require_dim(upstream.size(), net.output_dim(), "net_backward upstream");
  const BatchTrace trace = forward_batch(net, x);
  Gradients g;
  const Eigen::MatrixXd dx = detail::reverse_sweep(net, trace, upstream, &g, nullptr);
  g.input = dx.col(0);
  return g;
}

/// Parameter gradient summed over the batch, as a flat vector.
inline Eigen::VectorXd backward_batch(const DenseNet& net, const BatchTrace& trace,
                                      const Eigen::MatrixXd& upstream) {
  require_dim(upstream.rows(), net.output_dim(), "backward_batch upstream rows");
  require_dim(upstream.cols(), trace.output().cols(), "backward_batch upstream cols");
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(net.parameter_count());
  detail::reverse_sweep(net, trace, upstream, nullptr, &flat);
  return flat;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step = 0;

  OptimizerState() = default;
  OptimizerState(Eigen::Index n, AdamConfig cfg)
      : config(cfg),
        first_moment(Eigen::VectorXd::Zero(n)),
        second_moment(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam step (descent). Throws on non-finite gradients.
inline void opt_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                     OptimizerState& state) {
  require_dim(grads.size(), params.size(), "opt_step gradient");
  require_dim(state.first_moment.size(), params.size(), "opt_step first moment");
  require_dim(state.second_moment.size(), params.size(), "opt_step second moment");
  if (!grads.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grads.size() && std::isfinite(grads(bad)); ++bad) {
    }
    throw NumericalError("opt_step: non-finite gradient at coordinate " + std::to_string(bad) +
                         " (step " + std::to_string(state.step + 1) + ")");
  }
  const auto& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.learning_rate * (state.first_moment.array() / bc1) /
                    ((state.second_moment.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace bpl
