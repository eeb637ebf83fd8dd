#pragma once

// Dense MLP math with a reverse pass that can be overridden per hidden layer.
//
// A network is a stack of dense layers. Every layer but the last is followed
// by a ReLU; the activation h^i of hidden layer i may then be rescaled
// elementwise by a forward hook (this is where stochastic pruning plugs in).
// The tape remembers everything the reverse pass needs, and a backward
// override replaces the derivative of that rescaling step for one layer.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saplab/errors.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

struct DenseLayer {
  Tensor weight;  // (fan_in x fan_out)
  Tensor bias;    // (fan_out)

  std::size_t fan_in() const noexcept { return weight.shape()[0]; }
  std::size_t fan_out() const noexcept { return weight.shape()[1]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class Network {
 public:
  Network() = default;

  explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.fan_out()) {
        throw ConfigError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
      }
      if (i > 0 && l.fan_in() != layers_[i - 1].fan_out()) {
        throw ConfigError("layer " + std::to_string(i) + " fan-in does not match previous fan-out");
      }
    }
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  std::size_t depth() const noexcept { return layers_.size(); }
  /// Number of ReLU layers, i.e. layers whose output can be pruned.
  std::size_t hidden_count() const noexcept { return layers_.empty() ? 0 : layers_.size() - 1; }
  std::size_t input_width() const noexcept { return layers_.front().fan_in(); }
  std::size_t class_count() const noexcept { return layers_.back().fan_out(); }

  /// [m_0, m_1, ..., m_d]
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_width()};
    for (const auto& l : layers_) w.push_back(l.fan_out());
    return w;
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Per-layer record of one forward pass.
struct LayerTape {
  std::size_t layer = 0;
  Tensor input;           // activation fed into the dense layer
  Tensor pre_activation;  // W^T input + b
  Tensor output;          // relu(pre_activation) for hidden layers; logits for the last
  Tensor scale;           // hook rescaling applied after the ReLU; empty = none
};

struct Tape {
  std::vector<LayerTape> layers;
};

struct ForwardResult {
  Tensor logits;
  Tape tape;
};

/// What a forward hook substitutes for a hidden activation h: the value fed to
/// the next layer and the elementwise derivative d value / d h.
struct HookOutput {
  Tensor value;
  Tensor scale;
};

enum class BackwardRule {
  identity_through,  // treat the post-ReLU rescaling as absent
  mask_scale,        // multiply the incoming gradient by the given scale
};

struct BackwardOverride {
  BackwardRule rule = BackwardRule::identity_through;
  Tensor scale;  // used by mask_scale only

  static BackwardOverride identity() { return {}; }
  static BackwardOverride masked(Tensor scale) { return {BackwardRule::mask_scale, std::move(scale)}; }
};

/// Keyed by hidden-layer index.
using OverrideMap = std::map<std::size_t, BackwardOverride>;

struct ParamGradients {
  std::vector<DenseLayer> layers;  // same shapes as the network
  Tensor input;
};

namespace detail {

inline void dense_forward(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
  const std::size_t n_in = layer.fan_in();
  const std::size_t n_out = layer.fan_out();
  const double* w = layer.weight.data().data();
  for (std::size_t j = 0; j < n_out; ++j) out[j] = layer.bias[j];
  for (std::size_t i = 0; i < n_in; ++i) {
    const double a = in[i];
    if (a == 0.0) continue;
    const double* row = w + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) out[j] += a * row[j];
  }
}

inline void check_input(const Network& net, const Tensor& x) {
  if (x.rank() != 1 || x.size() != net.input_width()) {
    throw ShapeError("input shape " + x.shape_string() + " does not match network input width " +
                     std::to_string(net.input_width()));
  }
}

}  // namespace detail

/// Forward pass with a post-ReLU hook. `hook(layer, h)` returns an optional
/// HookOutput; when present its value is fed to the next layer instead of h.
template <class Hook>
ForwardResult forward(const Network& net, const Tensor& x, Hook&& hook) {
  detail::check_input(net, x);
  ForwardResult result;
  result.tape.layers.reserve(net.depth());
  Tensor activation = x;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const DenseLayer& layer = net.layers()[i];
    LayerTape rec;
    rec.layer = i;
    rec.pre_activation = Tensor::zeros(layer.fan_out());
    detail::dense_forward(layer, activation.data(), rec.pre_activation.data());
    rec.input = std::move(activation);
    if (i + 1 == net.depth()) {
      rec.output = rec.pre_activation;
      result.logits = rec.output;
      result.tape.layers.push_back(std::move(rec));
      break;
    }
    rec.output = rec.pre_activation;
    for (double& v : rec.output) v = v > 0.0 ? v : 0.0;
    std::optional<HookOutput> replaced = hook(i, static_cast<const Tensor&>(rec.output));
    if (replaced) {
      if (replaced->value.size() != rec.output.size() || replaced->scale.size() != rec.output.size()) {
        throw ShapeError("hook output width does not match layer " + std::to_string(i));
      }
      activation = std::move(replaced->value);
      rec.scale = std::move(replaced->scale);
    } else {
      activation = rec.output;
    }
    result.tape.layers.push_back(std::move(rec));
  }
  return result;
}

inline ForwardResult forward(const Network& net, const Tensor& x) {
  return forward(net, x, [](std::size_t, const Tensor&) { return std::optional<HookOutput>{}; });
}

namespace detail {

inline ParamGradients backward_impl(const Network& net, const Tape& tape, const Tensor& loss_grad,
                                    const OverrideMap& overrides, bool want_params) {
  if (tape.layers.size() != net.depth()) throw ShapeError("tape does not belong to this network");
  if (loss_grad.size() != net.class_count()) {
    throw ShapeError("loss gradient width " + std::to_string(loss_grad.size()) + " != class count " +
                     std::to_string(net.class_count()));
  }
  for (const auto& [idx, ov] : overrides) {
    if (idx >= net.hidden_count()) {
      throw ConfigError("backward override references nonexistent hidden layer " + std::to_string(idx));
    }
    if (ov.rule == BackwardRule::mask_scale && ov.scale.size() != net.layers()[idx].fan_out()) {
      throw ConfigError("mask-scale override for layer " + std::to_string(idx) + " has wrong width");
    }
  }

  ParamGradients out;
  if (want_params) {
    out.layers.resize(net.depth());
    for (std::size_t i = 0; i < net.depth(); ++i) {
      out.layers[i].weight = Tensor(net.layers()[i].weight.shape());
      out.layers[i].bias = Tensor(net.layers()[i].bias.shape());
    }
  }

  std::vector<double> grad(loss_grad.begin(), loss_grad.end());  // d loss / d (layer output)
  for (std::size_t k = net.depth(); k-- > 0;) {
    const DenseLayer& layer = net.layers()[k];
    const LayerTape& rec = tape.layers[k];
    const std::size_t n_in = layer.fan_in();
    const std::size_t n_out = layer.fan_out();

    if (k + 1 < net.depth()) {
      // grad currently refers to the (possibly rescaled) activation fed to layer k+1.
      const Tensor* scale = rec.scale.empty() ? nullptr : &rec.scale;
      if (auto it = overrides.find(k); it != overrides.end()) {
        scale = it->second.rule == BackwardRule::identity_through ? nullptr : &it->second.scale;
      }
      if (scale) {
        for (std::size_t j = 0; j < n_out; ++j) grad[j] *= (*scale)[j];
      }
      for (std::size_t j = 0; j < n_out; ++j) {
        if (!(rec.pre_activation[j] > 0.0)) grad[j] = 0.0;
      }
    }

    if (want_params) {
      auto& gw = out.layers[k].weight;
      auto& gb = out.layers[k].bias;
      for (std::size_t j = 0; j < n_out; ++j) gb[j] = grad[j];
      for (std::size_t i = 0; i < n_in; ++i) {
        const double a = rec.input[i];
        if (a == 0.0) continue;
        double* row = gw.data().data() + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) row[j] = a * grad[j];
      }
    }

    std::vector<double> next(n_in, 0.0);
    const double* w = layer.weight.data().data();
    for (std::size_t i = 0; i < n_in; ++i) {
      const double* row = w + i * n_out;
      double s = 0.0;
      for (std::size_t j = 0; j < n_out; ++j) s += row[j] * grad[j];
      next[i] = s;
    }
    grad = std::move(next);
  }
  out.input = Tensor::vector(std::move(grad));
  return out;
}

}  // namespace detail

/// d loss / d x. With no overrides this is the exact gradient of the taped
/// computation, including any hook rescaling.
inline Tensor backward(const Network& net, const Tape& tape, const Tensor& loss_grad,
                       const OverrideMap& overrides = {}) {
  return detail::backward_impl(net, tape, loss_grad, overrides, false).input;
}

/// As backward(), additionally returning weight and bias gradients.
inline ParamGradients backward_params(const Network& net, const Tape& tape, const Tensor& loss_grad,
                                      const OverrideMap& overrides = {}) {
  return detail::backward_impl(net, tape, loss_grad, overrides, true);
}

inline Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  double mx = logits.empty() ? 0.0 : logits[argmax(logits.data())];
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  Tensor logits_grad;
};

/// Cross-entropy of softmax(logits) against `label`, via log-sum-exp.
inline LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.size()) + " classes");
  }
  const double mx = logits[argmax(logits.data())];
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  LossAndGrad r;
  r.loss = log_z - logits[label];
  r.logits_grad = Tensor::zeros(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) r.logits_grad[j] = std::exp(logits[j] - log_z);
  r.logits_grad[label] -= 1.0;
  return r;
}

}  // namespace saplab
