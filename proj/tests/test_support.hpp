#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the code paths it is used to check (finite differences only use
// forward passes; exact rationals use integer arithmetic).

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "saplab/saplab.hpp"

namespace saplab::testing {

inline Network random_network(const std::vector<std::size_t>& widths, std::uint64_t seed, double bias_scale = 0.1) {
  Network net = init_network(MlpSpec{widths, seed});
  std::mt19937_64 rng(seed ^ 0xB1A5ULL);
  std::normal_distribution<double> n(0.0, bias_scale);
  for (auto& l : net.layers()) {
    for (double& b : l.bias) b = n(rng);
  }
  return net;
}

inline Tensor random_input(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor x = Tensor::zeros(n);
  for (double& v : x) v = u(rng);
  return x;
}

/// Central differences of a scalar function of a vector.
inline Tensor central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  Tensor g = Tensor::zeros(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    Tensor a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|), with differences below `abs_floor` counted as zero.
inline double rel_error(double a, double b, double abs_floor = 1e-10) {
  const double d = std::abs(a - b);
  if (d <= abs_floor) return 0.0;
  return d / std::max(std::abs(a), std::abs(b));
}

inline double max_rel_error(const Tensor& a, const Tensor& b, double abs_floor = 1e-10) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, rel_error(a[j], b[j], abs_floor));
  return m;
}

/// Sample variance, one value per column of `rows`.
inline std::vector<double> column_variance(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
  }
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - mean[j]) * (r[j] - mean[j]) / static_cast<double>(n - 1);
  }
  return var;
}

/// The reference benchmark: default experiment config, trained once per
/// test binary.
inline const PreparedModel& reference_model() {
  static const PreparedModel pm = [] {
    ExperimentConfig cfg;
    return prepare_model(cfg);
  }();
  return pm;
}

}  // namespace saplab::testing
