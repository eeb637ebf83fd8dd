// Acceptance suite: one line per criterion, exit status 1 if any fails.
// Criteria 5-8 share the reference grid (500 points, 200 PGD steps), which
// is run twice for the determinism check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "saplab/saplab.hpp"

using namespace saplab;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

/// (den^r - (den - num)^r) / den^r, integer arithmetic.
double exact_keep_prob(std::uint64_t num, std::uint64_t den, unsigned r) {
  std::uint64_t a = 1, b = 1;
  for (unsigned k = 0; k < r; ++k) {
    a *= den;
    b *= den - num;
  }
  return static_cast<double>(a - b) / static_cast<double>(a);
}

Outcome formula_exactness() {
  const Tensor p = Tensor::vector({0.25, 0.25, 0.5});
  bool ok = keep_prob(p, 1) == p;
  const Tensor q = keep_prob(p, 4);
  const double oracle[3] = {exact_keep_prob(1, 4, 4), exact_keep_prob(1, 4, 4), exact_keep_prob(1, 2, 4)};
  ok = ok && oracle[0] == 0.68359375 && oracle[2] == 0.9375;
  double worst = 0.0;
  for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs(q[j] - oracle[j]));
  ok = ok && worst <= 1e-15;
  return {ok, "keep_prob(p,1)==p bitwise, max |q - exact| = " + sci(worst)};
}

Outcome sampling_marginals() {
  const std::optional<Tensor> p = Tensor::vector({0.25, 0.25, 0.5});
  const int trials = 100000;
  double freq[2];
  int s = 0;
  for (auto scheme : {SamplingScheme::multinomial, SamplingScheme::binomial}) {
    CounterRng rng(derive_seed(20180201, {static_cast<std::uint64_t>(s), 2}));
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
      const auto m = sample_mask(p, 4, scheme, rng);
      hits += std::binary_search(m.begin(), m.end(), std::size_t{2});
    }
    freq[s++] = static_cast<double>(hits) / trials;
  }
  const double se = std::sqrt(2.0 * 0.9375 * 0.0625 / trials);
  const bool ok = std::abs(freq[0] - 0.9375) <= 0.01 && std::abs(freq[1] - 0.9375) <= 0.01 &&
                  std::abs(freq[0] - freq[1]) <= 3 * se;
  return {ok, "multinomial " + fmt(freq[0]) + ", binomial " + fmt(freq[1]) + " (target 0.9375 +/- 0.01; |diff| " +
                  fmt(std::abs(freq[0] - freq[1])) + " vs 3 SE " + fmt(3 * se) + ")"};
}

Outcome unbiasedness() {
  struct Case {
    Tensor h;
    std::size_t r;
  };
  const std::vector<Case> cases{{Tensor::vector({1.0, -1.0, 2.0}), 4}, {Tensor::vector({0.5, 1.0, 0.0, 1.5, 2.0}), 8}};
  const int n = 100000;
  double worst = 0.0;
  bool ok = true;
  std::uint64_t stream = 0;
  for (const auto& c : cases) {
    const auto p = retention_probs(c.h);
    const Tensor q = keep_prob(*p, c.r);
    for (auto scheme : {SamplingScheme::multinomial, SamplingScheme::binomial}) {
      CounterRng rng(derive_seed(20180201, {3, stream++}));
      std::vector<double> mean(c.h.size(), 0.0);
      for (int t = 0; t < n; ++t) {
        const Tensor out = apply_sap(c.h, sample_mask(p, c.r, scheme, rng), q);
        for (std::size_t j = 0; j < out.size(); ++j) mean[j] += out[j];
      }
      for (std::size_t j = 0; j < mean.size(); ++j) {
        mean[j] /= n;
        if (c.h[j] == 0.0) {
          ok = ok && mean[j] == 0.0;
        } else {
          const double rel = std::abs(mean[j] - c.h[j]) / std::abs(c.h[j]);
          worst = std::max(worst, rel);
          ok = ok && rel <= 0.01;
        }
      }
    }
  }
  return {ok, "max relative deviation of the mean " + fmt(worst, 5) + " (tolerance 0.01, 1e5 samples)"};
}

Outcome gradient_integrity(const PreparedModel& pm) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Network net = init_network(MlpSpec{{10, 32, 24, 5}, seed});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nb(0.0, 0.1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& l : net.layers()) {
      for (double& b : l.bias) b = nb(rng);
    }
    Tensor x = Tensor::zeros(10);
    for (double& v : x) v = u(rng);
    const std::size_t label = seed % 5;
    const Tensor g = oracle_vanilla(net)(x, label, {});
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double h = 1e-5;
      Tensor a = x, b = x;
      a[j] += h;
      b[j] -= h;
      const double fd = (softmax_cross_entropy(forward(net, a).logits, label).loss -
                         softmax_cross_entropy(forward(net, b).logits, label).loss) /
                        (2 * h);
      const double d = std::abs(fd - g[j]);
      if (d > 1e-12) worst = std::max(worst, d / std::max(std::abs(fd), std::abs(g[j])));
    }
  }
  std::size_t equal = 0;
  const Network& net = pm.checkpoint.network;
  for (std::size_t i = 0; i < pm.eval.size(); ++i) {
    equal += oracle_bpda(net)(pm.eval.x[i], pm.eval.y[i], {i, 0}) == oracle_vanilla(net)(pm.eval.x[i], pm.eval.y[i], {i, 0});
  }
  const bool ok = worst < 1e-4 && equal == pm.eval.size();
  return {ok, "max FD relative error " + sci(worst) + "; bpda == vanilla bitwise on " +
                  std::to_string(equal) + "/" + std::to_string(pm.eval.size()) + " points"};
}

Outcome calibration(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto eps = calibrate_epsilon(pm.checkpoint.network, pm.eval, cfg.attack, default_epsilon_grid());
  const double clean = accuracy(pm.checkpoint.network, pm.eval);
  const bool ok = eps && std::abs(*eps - kCalibratedEpsilon) < 1e-12 && clean >= 0.95;
  return {ok, "sweep picks epsilon " + (eps ? fmt(*eps, 2) : std::string("none")) + " (configured " +
                  fmt(kCalibratedEpsilon, 2) + "), undefended clean accuracy " + fmt(clean)};
}

const Finding& finding(const EvalReport& r, const std::string& id) {
  for (const auto& f : r.findings) {
    if (f.id == id) return f;
  }
  throw std::runtime_error("report has no finding " + id);
}

Outcome erratum_mechanism(const EvalReport& r) {
  const auto& sp = finding(r, "single_pass_pruning");
  const auto& av = finding(r, "averaging_recovers");
  const double margin = sp.values.value("margin", 0.0);
  return {sp.pass && av.pass,
          "single pass m1 " + fmt(sp.values.value("m1_single_pass", 0.0)) + " <= m2 " +
              fmt(sp.values.value("m2_single_pass", 0.0)) + " (margin " + fmt(margin) + ", " +
              (margin >= 0.01 ? "meets" : "below") + " the 1-point expectation); K=100 " +
              fmt(av.values.value("averaged", 0.0)) + " vs undefended " + fmt(av.values.value("undefended", 0.0)) +
              " (gap " + fmt(av.values.value("gap", 0.0)) + " <= 0.02)"};
}

Outcome attack_hierarchy(const EvalReport& r) {
  const auto& f = finding(r, "attack_hierarchy");
  const auto& v = f.values;
  return {f.pass, "through_sap " + fmt(v.value("through_sap", 0.0)) + " < transfer " + fmt(v.value("transfer", 0.0)) +
                      " [" + (v.value("through_sap_below_transfer", false) ? "ok" : "violated") + ", need " +
                      fmt(v.value("required_margin_through_sap_transfer", 0.0)) + "] < bpda " +
                      fmt(v.value("bpda", 0.0)) + " [" + (v.value("transfer_below_bpda", false) ? "ok" : "violated") +
                      ", need " + fmt(v.value("required_margin_transfer_bpda", 0.0)) + "]; bpda adv acc " +
                      fmt(v.value("bpda_adv_acc", 0.0)) + " (< 0.10), clean defended " +
                      fmt(v.value("clean_defended_acc", 0.0)) + " (>= 0.90)"};
}

Outcome scheme_invariance(const EvalReport& r) {
  const auto& f = finding(r, "scheme_invariance");
  return {f.pass, "binomial->multinomial " + fmt(f.values.value("cross", 0.0)) + " vs matched " +
                      fmt(f.values.value("matched", 0.0)) + " (gap " + fmt(f.values.value("gap", 0.0)) + " <= 0.05)"};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg;

  report("1 formula exactness", formula_exactness());
  report("2 sampling marginals", sampling_marginals());
  report("3 unbiasedness", unbiasedness());

  const PreparedModel pm = prepare_model(cfg);
  report("4 gradient integrity", gradient_integrity(pm));
  report("calibrated epsilon", calibration(pm, cfg));

  const EvalReport first = reproduce_erratum(cfg, pm);
  report("5 erratum mechanism", erratum_mechanism(first));
  report("6 attack hierarchy", attack_hierarchy(first));
  report("7 scheme invariance", scheme_invariance(first));

  // Second run from scratch: dataset, training and grid.
  const EvalReport second = reproduce_erratum(cfg);
  const std::string a = report_json_text(first), b = report_json_text(second);
  report("8 determinism", {a == b, a == b ? "two full runs produced identical " + std::to_string(a.size()) + "-byte reports"
                                          : "reports differ"});

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d failing, %.0f s total\n", failures, secs);
  return failures ? 1 : 0;
}
