#pragma once

// Stochastic activation pruning.
//
// After every hidden ReLU, activations are kept with probability driven by
// their magnitude: r draws with replacement from p_j = |h_j| / sum_k |h_k|,
// so neuron j survives with q_j = 1 - (1 - p_j)^r. Survivors are divided by
// q_j, which keeps E[h_hat_j] = h_j. The logits layer is never pruned.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/errors.hpp"
#include "saplab/gradcore.hpp"
#include "saplab/network.hpp"
#include "saplab/rng.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

enum class SamplingScheme {
  multinomial,  // exactly r categorical draws, duplicates collapse
  binomial,     // independent Bernoulli(q_j) per neuron
};

/// How K stochastic passes are combined into one output.
enum class Averaging { probabilities, logits };

inline std::string to_string(SamplingScheme s) { return s == SamplingScheme::multinomial ? "multinomial" : "binomial"; }
inline std::string to_string(Averaging a) { return a == Averaging::probabilities ? "probabilities" : "logits"; }

inline SamplingScheme scheme_from_string(const std::string& s) {
  if (s == "multinomial") return SamplingScheme::multinomial;
  if (s == "binomial") return SamplingScheme::binomial;
  throw ConfigError("unknown sampling scheme '" + s + "'");
}

struct SapConfig {
  double r_multiplier = 1.0;
  SamplingScheme scheme = SamplingScheme::multinomial;
  std::size_t passes = 100;
  std::uint64_t seed = 0;
  Averaging averaging = Averaging::probabilities;

  void validate() const {
    if (!(r_multiplier > 0.0) || !std::isfinite(r_multiplier)) throw ConfigError("r_multiplier must be > 0");
    if (passes < 1) throw ConfigError("passes must be >= 1");
  }

  /// r_i = round(r_multiplier * m_i), at least 1.
  std::size_t draws_for(std::size_t width) const {
    const double r = std::round(r_multiplier * static_cast<double>(width));
    return r < 1.0 ? 1 : static_cast<std::size_t>(r);
  }

  friend bool operator==(const SapConfig&, const SapConfig&) = default;
};

inline nlohmann::json to_json(const SapConfig& c) {
  return {{"r_multiplier", c.r_multiplier},
          {"scheme", to_string(c.scheme)},
          {"passes", c.passes},
          {"seed", c.seed},
          {"averaging", to_string(c.averaging)}};
}

inline SapConfig sap_config_from_json(const nlohmann::json& j) {
  try {
    SapConfig c;
    c.r_multiplier = j.value("r_multiplier", c.r_multiplier);
    c.scheme = scheme_from_string(j.value("scheme", std::string("multinomial")));
    c.passes = j.value("passes", c.passes);
    c.seed = j.value("seed", c.seed);
    const std::string avg = j.value("averaging", std::string("probabilities"));
    if (avg == "probabilities") {
      c.averaging = Averaging::probabilities;
    } else if (avg == "logits") {
      c.averaging = Averaging::logits;
    } else {
      throw ConfigError("unknown averaging mode '" + avg + "'");
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed SAP config: ") + e.what());
  }
}

/// p_j = |h_j| / sum_k |h_k|. nullopt marks the all-zero layer, where p is
/// undefined and the layer output is the zero vector.
inline std::optional<Tensor> retention_probs(const Tensor& h) {
  double total = 0.0;
  for (double v : h) total += std::abs(v);
  if (total == 0.0) return std::nullopt;
  Tensor p = h;
  for (double& v : p) v = std::abs(v) / total;
  return p;
}

/// q_j = 1 - (1 - p_j)^r, evaluated as -expm1(r * log1p(-p_j)). r == 1
/// returns p unchanged.
inline Tensor keep_prob(const Tensor& p, std::size_t r) {
  if (r < 1) throw ArgumentError("keep_prob needs r >= 1");
  if (r == 1) return p;
  Tensor q = p;
  const double rd = static_cast<double>(r);
  for (double& v : q) v = v == 0.0 ? 0.0 : -std::expm1(rd * std::log1p(-v));
  return q;
}

/// Sorted distinct retained indices. An absent p (degenerate layer) yields an
/// empty mask.
template <class Rng>
std::vector<std::size_t> sample_mask(const std::optional<Tensor>& p, std::size_t r, SamplingScheme scheme, Rng& rng) {
  if (r < 1) throw ArgumentError("sample_mask needs r >= 1");
  std::vector<std::size_t> mask;
  if (!p) return mask;
  const std::size_t m = p->size();
  if (scheme == SamplingScheme::multinomial) {
    std::discrete_distribution<std::size_t> draw(p->begin(), p->end());
    std::vector<char> hit(m, 0);
    for (std::size_t k = 0; k < r; ++k) hit[draw(rng)] = 1;
    for (std::size_t j = 0; j < m; ++j) {
      if (hit[j]) mask.push_back(j);
    }
  } else {
    const Tensor q = keep_prob(*p, r);
    for (std::size_t j = 0; j < m; ++j) {
      if (q[j] > 0.0 && std::bernoulli_distribution(q[j])(rng)) mask.push_back(j);
    }
  }
  return mask;
}

/// h_hat_j = h_j / q_j for retained j, zero elsewhere.
inline Tensor apply_sap(const Tensor& h, const std::vector<std::size_t>& mask, const Tensor& q) {
  if (!q.empty() && q.size() != h.size()) throw ShapeError("apply_sap: q width does not match h");
  Tensor out = Tensor::zeros(h.size());
  for (std::size_t j : mask) {
    if (j >= h.size()) throw ShapeError("apply_sap: mask index out of range");
    if (!(q[j] > 0.0)) throw std::logic_error("apply_sap: retained neuron has zero keep probability");
    out[j] = h[j] / q[j];
  }
  return out;
}

/// Elementwise derivative of apply_sap for a fixed mask: 1/q_j on the mask.
inline Tensor mask_scale(std::size_t width, const std::vector<std::size_t>& mask, const Tensor& q) {
  Tensor s = Tensor::zeros(width);
  for (std::size_t j : mask) s[j] = 1.0 / q[j];
  return s;
}

/// One pruned layer of one stochastic pass.
struct PruneSample {
  std::size_t layer = 0;
  std::size_t draws = 0;
  bool degenerate = false;
  Tensor p;  // empty when degenerate
  Tensor q;  // empty when degenerate
  std::vector<std::size_t> mask;
};

/// Independent randomness families. Evaluation passes and attack gradient
/// samples never share a stream.
enum class StreamDomain : std::uint64_t { evaluation = 1, attack_gradient = 2 };

struct StreamId {
  std::uint64_t example = 0;
  std::uint64_t pass = 0;
  StreamDomain domain = StreamDomain::evaluation;
};

inline CounterRng layer_stream(const SapConfig& cfg, const StreamId& id, std::size_t layer) {
  return CounterRng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(id.domain), id.example, id.pass, layer}));
}

struct SapForwardResult {
  Tensor logits;
  std::vector<PruneSample> samples;  // one per hidden layer
  Tape tape;                         // tape scales hold the fixed-mask derivative
};

inline SapForwardResult sap_forward(const Network& net, const Tensor& x, const SapConfig& cfg, const StreamId& id) {
  cfg.validate();
  SapForwardResult out;
  out.samples.reserve(net.hidden_count());
  auto hook = [&](std::size_t layer, const Tensor& h) -> std::optional<HookOutput> {
    PruneSample s;
    s.layer = layer;
    s.draws = cfg.draws_for(h.size());
    std::optional<Tensor> p = retention_probs(h);
    HookOutput replaced;
    if (!p) {
      s.degenerate = true;
      replaced = {Tensor::zeros(h.size()), Tensor::zeros(h.size())};
    } else {
      CounterRng rng = layer_stream(cfg, id, layer);
      s.q = keep_prob(*p, s.draws);
      s.mask = sample_mask(p, s.draws, cfg.scheme, rng);
      s.p = std::move(*p);
      replaced = {apply_sap(h, s.mask, s.q), mask_scale(h.size(), s.mask, s.q)};
    }
    out.samples.push_back(std::move(s));
    return replaced;
  };
  ForwardResult fr = forward(net, x, hook);
  out.logits = std::move(fr.logits);
  out.tape = std::move(fr.tape);
  return out;
}

inline SapForwardResult sap_forward(const Network& net, const Tensor& x, const SapConfig& cfg,
                                    std::uint64_t example_id, std::uint64_t pass_index) {
  return sap_forward(net, x, cfg, StreamId{example_id, pass_index, StreamDomain::evaluation});
}

/// The defended model's decision: K stochastic passes (pass indices 0..K-1 of
/// the example's evaluation stream), averaged, then argmax.
inline Prediction averaged_predict(const Network& net, const Tensor& x, const SapConfig& cfg,
                                   std::uint64_t example_id) {
  cfg.validate();
  Tensor acc = Tensor::zeros(net.class_count());
  for (std::size_t k = 0; k < cfg.passes; ++k) {
    SapForwardResult r = sap_forward(net, x, cfg, example_id, k);
    const Tensor contrib = cfg.averaging == Averaging::probabilities ? softmax(r.logits) : r.logits;
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += contrib[c];
  }
  const double inv = 1.0 / static_cast<double>(cfg.passes);
  for (double& v : acc) v *= inv;
  if (cfg.averaging == Averaging::logits) acc = softmax(acc);
  return {argmax(acc.data()), std::move(acc)};
}

}  // namespace saplab
