#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"

namespace saplab {
namespace {

using testing::central_difference;
using testing::max_rel_error;
using testing::random_input;
using testing::random_network;

Network identity_net() {
  // 2 -> 2 (ReLU) -> 2 with identity weights and zero bias.
  DenseLayer a{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros(2)};
  DenseLayer b{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros(2)};
  return Network({a, b});
}

Network scalar_net(double w) {
  // f(x) = relu(w x), read out through a unit output layer.
  DenseLayer a{Tensor::matrix(1, 1, {w}), Tensor::zeros(1)};
  DenseLayer b{Tensor::matrix(1, 1, {1.0}), Tensor::zeros(1)};
  return Network({a, b});
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.shape_string(), "(2x3)");
}

TEST(Forward, IdentityWeightsReluClipsNegative) {
  const auto r = forward(identity_net(), Tensor::vector({1.0, -2.0}));
  EXPECT_EQ(r.logits.values(), (std::vector<double>{1.0, 0.0}));
  ASSERT_EQ(r.tape.layers.size(), 2u);
  EXPECT_EQ(r.tape.layers[0].output.values(), (std::vector<double>{1.0, 0.0}));
}

TEST(Forward, ZeroInputZeroBiasGivesZeroLogits) {
  const Network net = init_network(MlpSpec{{4, 8, 3}, 5});
  const auto r = forward(net, Tensor::zeros(4));
  for (double v : r.logits) EXPECT_EQ(v, 0.0);
}

TEST(Forward, RepeatedCallsAreBitIdentical) {
  const Network net = random_network({6, 16, 16, 4}, 11);
  const Tensor x = random_input(6, 3);
  const auto a = forward(net, x);
  const auto b = forward(net, x);
  EXPECT_EQ(a.logits, b.logits);
  const Tensor g1 = backward(net, a.tape, a.logits);
  const Tensor g2 = backward(net, b.tape, b.logits);
  EXPECT_EQ(g1, g2);
}

TEST(Forward, InputShapeMismatchThrows) {
  const Network net = random_network({6, 16, 4}, 1);
  EXPECT_THROW(forward(net, Tensor::zeros(5)), ShapeError);
  EXPECT_THROW(forward(net, Tensor({2, 3})), ShapeError);
}

TEST(Forward, TapeShapesMatchLayerWidths) {
  const Network net = random_network({5, 7, 9, 3}, 2);
  const auto r = forward(net, random_input(5, 1));
  const auto w = net.widths();
  for (std::size_t i = 0; i < net.depth(); ++i) {
    EXPECT_EQ(r.tape.layers[i].input.size(), w[i]);
    EXPECT_EQ(r.tape.layers[i].output.size(), w[i + 1]);
    EXPECT_EQ(r.tape.layers[i].pre_activation.size(), w[i + 1]);
  }
}

TEST(Backward, ScalarReluAnalytic) {
  const Network net = scalar_net(2.0);
  const Tensor one = Tensor::vector({1.0});
  auto pos = forward(net, Tensor::vector({3.0}));
  EXPECT_DOUBLE_EQ(backward(net, pos.tape, one)[0], 2.0);
  auto neg = forward(net, Tensor::vector({-3.0}));
  EXPECT_DOUBLE_EQ(backward(net, neg.tape, one)[0], 0.0);
}

TEST(Backward, MatchesFiniteDifferencesOnInputs) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Network net = random_network({10, 32, 24, 5}, seed);
    const Tensor x = random_input(10, seed + 100, -1.0, 1.0);
    const Tensor c = random_input(5, seed + 200, -1.0, 1.0);  // loss = c . logits
    const auto loss = [&](const Tensor& z) {
      const auto r = forward(net, z);
      double s = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) s += c[k] * r.logits[k];
      return s;
    };
    const auto r = forward(net, x);
    const Tensor g = backward(net, r.tape, c);
    EXPECT_LT(max_rel_error(g, central_difference(loss, x)), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, MatchesFiniteDifferencesOnParameters) {
  const Network net = random_network({6, 12, 8, 3}, 42);
  const Tensor x = random_input(6, 7, -1.0, 1.0);
  const std::size_t label = 1;
  const auto r = forward(net, x);
  const LossAndGrad lg = softmax_cross_entropy(r.logits, label);
  const ParamGradients pg = backward_params(net, r.tape, lg.logits_grad);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (bool is_bias : {false, true}) {
      const std::size_t n = is_bias ? net.layers()[l].bias.size() : net.layers()[l].weight.size();
      for (std::size_t e = 0; e < n; ++e) {
        auto eval = [&](double delta) {
          Network p = net;
          (is_bias ? p.layers()[l].bias : p.layers()[l].weight)[e] += delta;
          return softmax_cross_entropy(forward(p, x).logits, label).loss;
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        const double an = is_bias ? pg.layers[l].bias[e] : pg.layers[l].weight[e];
        worst = std::max(worst, testing::rel_error(an, fd, 1e-9));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, OverrideOnMissingLayerIsConfigError) {
  const Network net = random_network({4, 8, 3}, 1);
  const auto r = forward(net, random_input(4, 1));
  OverrideMap bad{{1, BackwardOverride::identity()}};  // only hidden layer 0 exists
  EXPECT_THROW(backward(net, r.tape, r.logits, bad), ConfigError);
  OverrideMap wrong_width{{0, BackwardOverride::masked(Tensor::zeros(3))}};
  EXPECT_THROW(backward(net, r.tape, r.logits, wrong_width), ConfigError);
}

TEST(Backward, HookScaleIsPartOfTheExactGradient) {
  const Network net = random_network({5, 9, 7, 3}, 8);
  const Tensor x = random_input(5, 9);
  const Tensor s0 = random_input(9, 10, 0.5, 2.0);
  auto hook = [&](std::size_t layer, const Tensor& h) -> std::optional<HookOutput> {
    if (layer != 0) return std::nullopt;
    Tensor v = h;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] *= s0[j];
    return HookOutput{v, s0};
  };
  const Tensor c = Tensor::vector({1.0, -0.5, 0.25});
  const auto loss = [&](const Tensor& z) {
    const auto r = forward(net, z, hook);
    return c[0] * r.logits[0] + c[1] * r.logits[1] + c[2] * r.logits[2];
  };
  const auto r = forward(net, x, hook);
  EXPECT_LT(max_rel_error(backward(net, r.tape, c), central_difference(loss, x)), 1e-4);

  // identity-through ignores the recorded scale entirely.
  const auto plain = forward(net, x);
  Tape scaled = plain.tape;
  scaled.layers[0].scale = s0;
  EXPECT_EQ(backward(net, scaled, c, {{0, BackwardOverride::identity()}}), backward(net, plain.tape, c));

  // mask-scale with the recorded scale reproduces the default rule.
  EXPECT_EQ(backward(net, r.tape, c, {{0, BackwardOverride::masked(s0)}}), backward(net, r.tape, c));
}

TEST(SoftmaxCrossEntropy, SymmetricTwoClass) {
  const auto r = softmax_cross_entropy(Tensor::vector({0.0, 0.0}), 0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.logits_grad[0], -0.5, 1e-15);
  EXPECT_NEAR(r.logits_grad[1], 0.5, 1e-15);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrectLimit) {
  const auto r = softmax_cross_entropy(Tensor::vector({50.0, 0.0}), 0);
  EXPECT_GE(r.loss, 0.0);
  EXPECT_LT(r.loss, 1e-20);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(softmax_cross_entropy(Tensor::vector({0.0, 1.0}), 2), ArgumentError);
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor z = random_input(7, seed, -3.0, 3.0);
    const std::size_t label = seed % 7;
    const auto loss = [&](const Tensor& t) { return softmax_cross_entropy(t, label).loss; };
    EXPECT_LT(max_rel_error(softmax_cross_entropy(z, label).logits_grad, central_difference(loss, z), 1e-11), 1e-6);
  }
}

TEST(SoftmaxCrossEntropy, StableForLargeLogits) {
  for (double mag : {1e2, 5e2, 1e3}) {
    const Tensor z = Tensor::vector({mag, -mag, 0.5 * mag, mag});
    const auto r = softmax_cross_entropy(z, 1);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_TRUE(r.logits_grad.all_finite());
    EXPECT_TRUE(softmax(z).all_finite());
    EXPECT_NEAR(softmax(z)[0], 0.5, 1e-12);
  }
}

}  // namespace
}  // namespace saplab
