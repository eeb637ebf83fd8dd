#pragma once

// L-infinity PGD with pluggable gradient oracles and decision rules.
//
// The oracle supplies the direction; the decision rule judges success at
// checkpoints. The three attacks differ only in that pairing:
//   through-SAP  gradient of a sampled pruned pass, judged by the defended model
//   transfer     vanilla gradient, stopping judged by the undefended model,
//                final success judged by the defended model
//   BPDA         vanilla gradient, judged by the defended model

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/errors.hpp"
#include "saplab/gradcore.hpp"
#include "saplab/network.hpp"
#include "saplab/rng.hpp"
#include "saplab/samples.hpp"
#include "saplab/sap.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

enum class OracleKind { vanilla, bpda, through_sap };

inline std::string to_string(OracleKind k) {
  switch (k) {
    case OracleKind::vanilla: return "vanilla";
    case OracleKind::bpda: return "bpda";
    case OracleKind::through_sap: return "through_sap";
  }
  return "?";
}

inline OracleKind oracle_from_string(const std::string& s) {
  if (s == "vanilla") return OracleKind::vanilla;
  if (s == "bpda") return OracleKind::bpda;
  if (s == "through_sap") return OracleKind::through_sap;
  throw ConfigError("unknown gradient oracle '" + s + "'");
}

struct AttackConfig {
  double epsilon = 0.05;
  double step_size = 0.05 / 8.0;
  std::size_t iterations = 200;
  bool targeted = false;
  std::uint64_t target_seed = 0;
  OracleKind oracle = OracleKind::bpda;
  std::size_t eot_samples = 1;
  std::size_t eval_every = 10;
  std::size_t eval_passes = 100;

  void validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ArgumentError("epsilon must be >= 0");
    if (!(step_size > 0.0)) throw ArgumentError("step_size must be > 0");
    if (epsilon > 0.0 && step_size > epsilon) throw ArgumentError("step_size must not exceed epsilon");
    if (iterations < 1) throw ArgumentError("iterations must be >= 1");
    if (eot_samples < 1) throw ArgumentError("eot_samples must be >= 1");
    if (eval_every < 1) throw ArgumentError("eval_every must be >= 1");
    if (eval_passes < 1) throw ArgumentError("eval_passes must be >= 1");
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

inline nlohmann::json to_json(const AttackConfig& c) {
  return {{"epsilon", c.epsilon},
          {"step_size", c.step_size},
          {"iterations", c.iterations},
          {"targeted", c.targeted},
          {"target_rule", "seeded_uniform_excluding_true"},
          {"target_seed", c.target_seed},
          {"oracle", to_string(c.oracle)},
          {"eot_samples", c.eot_samples},
          {"eval_every", c.eval_every},
          {"eval_passes", c.eval_passes}};
}

/// Missing step_size defaults to epsilon / 8.
inline AttackConfig attack_config_from_json(const nlohmann::json& j) {
  try {
    AttackConfig c;
    c.epsilon = j.value("epsilon", c.epsilon);
    c.step_size = j.contains("step_size") ? j.at("step_size").get<double>() : c.epsilon / 8.0;
    if (c.epsilon == 0.0 && !j.contains("step_size")) c.step_size = 1e-3;
    c.iterations = j.value("iterations", c.iterations);
    c.targeted = j.value("targeted", c.targeted);
    c.target_seed = j.value("target_seed", c.target_seed);
    c.oracle = oracle_from_string(j.value("oracle", std::string("bpda")));
    c.eot_samples = j.value("eot_samples", c.eot_samples);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_passes = j.value("eval_passes", c.eval_passes);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed attack config: ") + e.what());
  }
}

/// Where a gradient is requested: which example, which PGD step. Stochastic
/// oracles derive their randomness from it.
struct OracleCall {
  std::uint64_t example = 0;
  std::uint64_t step = 0;
};

/// Returns d loss(f(x), label) / dx.
using GradientOracle = std::function<Tensor(const Tensor& x, std::size_t label, const OracleCall& call)>;

/// Predicted label of the model under attack.
using DecisionRule = std::function<std::size_t(const Tensor& x, std::uint64_t example)>;

/// Exact backprop through the undefended network.
inline GradientOracle oracle_vanilla(const Network& net) {
  return [&net](const Tensor& x, std::size_t label, const OracleCall&) {
    ForwardResult fr = forward(net, x);
    LossAndGrad lg = softmax_cross_entropy(fr.logits, label);
    return backward(net, fr.tape, lg.logits_grad);
  };
}

/// Forward and backward both on the vanilla network: pruning is removed from
/// the backward pass altogether, so the gradient is the vanilla one. The
/// defended model only enters through the decision rule paired with it.
inline GradientOracle oracle_bpda(const Network& net) {
  return [&net](const Tensor& x, std::size_t label, const OracleCall&) {
    ForwardResult fr = forward(net, x);
    LossAndGrad lg = softmax_cross_entropy(fr.logits, label);
    OverrideMap identity;
    for (std::size_t l = 0; l < net.hidden_count(); ++l) identity[l] = BackwardOverride::identity();
    return backward(net, fr.tape, lg.logits_grad, identity);
  };
}

/// Mean over eot_samples fresh pruning draws of the exact gradient through
/// each sampled pass (mask-scale rule: gradient * mask / q).
inline GradientOracle oracle_through_sap(const Network& net, SapConfig cfg, std::size_t eot_samples) {
  if (eot_samples < 1) throw ArgumentError("eot_samples must be >= 1");
  cfg.validate();
  return [&net, cfg, eot_samples](const Tensor& x, std::size_t label, const OracleCall& call) {
    Tensor mean = Tensor::zeros(x.size());
    for (std::size_t s = 0; s < eot_samples; ++s) {
      const StreamId id{call.example, call.step * eot_samples + s, StreamDomain::attack_gradient};
      SapForwardResult r = sap_forward(net, x, cfg, id);
      LossAndGrad lg = softmax_cross_entropy(r.logits, label);
      OverrideMap rules;
      for (const auto& rec : r.tape.layers) {
        if (!rec.scale.empty()) rules[rec.layer] = BackwardOverride::masked(rec.scale);
      }
      Tensor g = backward(net, r.tape, lg.logits_grad, rules);
      for (std::size_t j = 0; j < g.size(); ++j) mean[j] += g[j];
    }
    const double inv = 1.0 / static_cast<double>(eot_samples);
    for (double& v : mean) v *= inv;
    return mean;
  };
}

inline DecisionRule undefended_decision(const Network& net) {
  return [&net](const Tensor& x, std::uint64_t) { return predict_clean(net, x).label; };
}

inline DecisionRule defended_decision(const Network& net, const SapConfig& cfg) {
  return [&net, cfg](const Tensor& x, std::uint64_t example) { return averaged_predict(net, x, cfg, example).label; };
}

/// What the attacker is after for one point.
struct AttackGoal {
  std::size_t true_label = 0;
  std::optional<std::size_t> target;  // set for targeted attacks

  bool achieved_by(std::size_t predicted) const {
    return target ? predicted == *target : predicted != true_label;
  }
};

/// Uniform over the C - 1 wrong classes, one independent draw per example.
inline std::size_t choose_target(std::uint64_t seed, std::uint64_t example, std::size_t true_label,
                                 std::size_t classes) {
  if (classes < 2) throw ArgumentError("targeted attacks need at least two classes");
  CounterRng rng(derive_seed(seed, {tag_hash("target"), example}));
  std::uniform_int_distribution<std::size_t> pick(0, classes - 2);
  const std::size_t k = pick(rng);
  return k < true_label ? k : k + 1;
}

struct AttackCheckpoint {
  std::size_t step = 0;
  std::size_t predicted = 0;
};

struct AdvResult {
  Tensor x_adv;
  std::vector<AttackCheckpoint> checkpoints;
  bool success = false;
  std::size_t iterations_used = 0;
};

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Clamp into the epsilon ball around `origin` intersected with [0, 1]^d.
inline void project(Tensor& x, const Tensor& origin, double epsilon) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double lo = std::max(0.0, origin[j] - epsilon);
    const double hi = std::min(1.0, origin[j] + epsilon);
    x[j] = std::clamp(x[j], lo, hi);
  }
}

/// Signed-gradient ascent from x (no random start). The decision rule is
/// consulted at step 0, every eval_every steps and after the last step; the
/// first successful checkpoint ends the attack.
inline AdvResult pgd(const GradientOracle& oracle, const DecisionRule& decide, const Tensor& x, const AttackGoal& goal,
                     const AttackConfig& cfg, std::uint64_t example = 0) {
  cfg.validate();
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("pgd: input outside the [0, 1] data box");
  }
  const std::size_t label = goal.target ? *goal.target : goal.true_label;
  const double direction = goal.target ? -1.0 : 1.0;

  AdvResult res;
  Tensor cur = x;
  auto check = [&](std::size_t step) {
    const std::size_t predicted = decide(cur, example);
    res.checkpoints.push_back({step, predicted});
    return goal.achieved_by(predicted);
  };

  if (check(0)) {
    res.x_adv = std::move(cur);
    res.success = true;
    return res;
  }
  for (std::size_t step = 1; step <= cfg.iterations; ++step) {
    const Tensor g = oracle(cur, label, OracleCall{example, step - 1});
    if (g.size() != cur.size()) throw ShapeError("oracle gradient width does not match the input");
    for (std::size_t j = 0; j < cur.size(); ++j) cur[j] += cfg.step_size * direction * sign_of(g[j]);
    project(cur, x, cfg.epsilon);
    res.iterations_used = step;
    if (step % cfg.eval_every == 0 || step == cfg.iterations) {
      if (check(step)) {
        res.success = true;
        break;
      }
    }
  }
  res.x_adv = std::move(cur);
  return res;
}

// ---------------------------------------------------------------------------
// Batch statistics.

/// A proportion with its binomial standard error.
struct Rate {
  std::size_t hits = 0;
  std::size_t n = 0;

  double value() const { return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0; }
  double stderr_() const {
    if (!n) return 0.0;
    const double p = value();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  }
};

struct AttackStats {
  Rate success;           // goal achieved on the defended model
  Rate defended_correct;  // defended model still predicts the true label
  std::vector<Tensor> x_adv;
  std::vector<std::size_t> true_labels;
  std::vector<std::optional<std::size_t>> targets;
  std::vector<bool> succeeded;
};

/// Runs pgd on every point. `steer` judges checkpoints during the attack,
/// `judge` produces the reported outcome on the final iterate.
inline AttackStats run_attack(const GradientOracle& oracle, const DecisionRule& steer, const DecisionRule& judge,
                              const Samples& data, const AttackConfig& cfg) {
  data.validate();
  cfg.validate();
  AttackStats st;
  for (std::size_t i = 0; i < data.size(); ++i) {
    AttackGoal goal{data.y[i], std::nullopt};
    if (cfg.targeted) goal.target = choose_target(cfg.target_seed, i, data.y[i], data.classes);
    AdvResult r = pgd(oracle, steer, data.x[i], goal, cfg, i);
    const std::size_t final_label = judge(r.x_adv, i);
    const bool ok = goal.achieved_by(final_label);
    st.success.n++;
    st.success.hits += ok ? 1 : 0;
    st.defended_correct.n++;
    st.defended_correct.hits += final_label == data.y[i] ? 1 : 0;
    st.x_adv.push_back(std::move(r.x_adv));
    st.true_labels.push_back(goal.true_label);
    st.targets.push_back(goal.target);
    st.succeeded.push_back(ok);
  }
  return st;
}

/// Adversarial examples crafted against the undefended model, stopping at the
/// first step where it is fooled (checked every step; the check is one clean
/// forward), then scored on the defended averaged model.
inline AttackStats transfer_attack(const Network& source, const SapConfig& defended, const Samples& data,
                                   AttackConfig cfg) {
  SapConfig judged = defended;
  judged.passes = cfg.eval_passes;
  cfg.eval_every = 1;
  return run_attack(oracle_vanilla(source), undefended_decision(source), defended_decision(source, judged), data, cfg);
}

/// One attack against one model. With no defense every oracle is plain
/// white-box PGD on the undefended network. Against SAP, `vanilla` is the
/// transfer attack, `bpda` steers by the defended model, and `through_sap`
/// additionally differentiates through sampled pruning. `judge_with`
/// overrides the defense used for the final verdict (cross-scheme runs).
inline AttackStats attack_model(const Network& net, const std::optional<SapConfig>& defense, const Samples& data,
                                const AttackConfig& cfg, const std::optional<SapConfig>& judge_with = std::nullopt) {
  cfg.validate();
  if (!defense) {
    const DecisionRule clean = undefended_decision(net);
    return run_attack(oracle_vanilla(net), clean, clean, data, cfg);
  }
  SapConfig steer_cfg = *defense;
  steer_cfg.passes = cfg.eval_passes;
  SapConfig judge_cfg = judge_with ? *judge_with : *defense;
  judge_cfg.passes = cfg.eval_passes;
  switch (cfg.oracle) {
    case OracleKind::vanilla:
      return transfer_attack(net, judge_cfg, data, cfg);
    case OracleKind::bpda:
      return run_attack(oracle_bpda(net), defended_decision(net, steer_cfg), defended_decision(net, judge_cfg), data,
                        cfg);
    case OracleKind::through_sap:
      return run_attack(oracle_through_sap(net, *defense, cfg.eot_samples), defended_decision(net, steer_cfg),
                        defended_decision(net, judge_cfg), data, cfg);
  }
  throw ConfigError("unknown oracle");
}

// ---------------------------------------------------------------------------
// Adversarial-example dump: "SAPX", u32 version, u32 count, u32 dim, then
// count*dim f64, count u32 true labels, count u32 targets (0xFFFFFFFF when
// untargeted). Everything little-endian.

inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::uint32_t kNoTarget = 0xFFFFFFFFu;

struct AdvDump {
  std::uint32_t dim = 0;
  std::vector<Tensor> x;
  std::vector<std::uint32_t> true_labels;
  std::vector<std::uint32_t> targets;

  friend bool operator==(const AdvDump&, const AdvDump&) = default;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::size_t pos, std::string origin)
      : bytes_(bytes), pos_(pos), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }

  void expect(std::string_view magic) {
    need(magic.size());
    if (bytes_.compare(pos_, magic.size(), magic) != 0) throw IoError(origin_, "bad magic, expected SAPX");
    pos_ += magic.size();
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError(origin_, "truncated SAPX block");
  }

  const std::string& bytes_;
  std::size_t pos_;
  std::string origin_;
};

}  // namespace detail

inline std::string encode_dump(const AdvDump& d) {
  if (d.x.size() != d.true_labels.size() || d.x.size() != d.targets.size()) {
    throw ShapeError("dump: example, label and target counts differ");
  }
  std::string out = "SAPX";
  detail::put_u32(out, kDumpVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(d.x.size()));
  detail::put_u32(out, d.dim);
  for (const auto& x : d.x) {
    if (x.size() != d.dim) throw ShapeError("dump: example width does not match dim");
    for (double v : x) detail::put_f64(out, v);
  }
  for (auto v : d.true_labels) detail::put_u32(out, v);
  for (auto v : d.targets) detail::put_u32(out, v);
  return out;
}

/// Decodes one block starting at `pos`; advances pos past it.
inline AdvDump decode_dump(const std::string& bytes, std::size_t& pos, const std::string& origin = "<memory>") {
  detail::ByteReader r(bytes, pos, origin);
  r.expect("SAPX");
  const std::uint32_t version = r.u32();
  if (version != kDumpVersion) throw IoError(origin, "unsupported SAPX version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  AdvDump d;
  d.dim = r.u32();
  d.x.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> v(d.dim);
    for (auto& e : v) e = r.f64();
    d.x.push_back(Tensor::vector(std::move(v)));
  }
  for (std::uint32_t i = 0; i < count; ++i) d.true_labels.push_back(r.u32());
  for (std::uint32_t i = 0; i < count; ++i) d.targets.push_back(r.u32());
  pos = r.pos();
  return d;
}

inline AdvDump make_dump(const AttackStats& st, std::size_t dim) {
  AdvDump d;
  d.dim = static_cast<std::uint32_t>(dim);
  d.x = st.x_adv;
  for (std::size_t i = 0; i < st.x_adv.size(); ++i) {
    d.true_labels.push_back(static_cast<std::uint32_t>(st.true_labels[i]));
    d.targets.push_back(st.targets[i] ? static_cast<std::uint32_t>(*st.targets[i]) : kNoTarget);
  }
  return d;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace saplab
