#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "ultra/error.hpp"
#include "ultra/nn.hpp"

namespace nn = ultra::nn;
using nn::Activation;
using ultra::Rng;

namespace {

// Straight-line reference forward pass.
std::vector<double> reference_forward(const nn::Mlp& net, std::vector<double> x) {
  for (const auto& L : net.layers()) {
    std::vector<double> y(L.out_dim);
    for (std::size_t r = 0; r < L.out_dim; ++r) {
      double acc = L.bias[r];
      for (std::size_t c = 0; c < L.in_dim; ++c) acc += L.weights[r * L.in_dim + c] * x[c];
      switch (L.activation) {
        case Activation::Relu: y[r] = acc > 0 ? acc : 0; break;
        case Activation::Sigmoid: y[r] = 1 / (1 + std::exp(-acc)); break;
        case Activation::Identity: y[r] = acc; break;
      }
    }
    x = std::move(y);
  }
  return x;
}

double min_abs_relu_preactivation(const nn::Mlp& net, std::vector<double> x) {
  double m = INFINITY;
  for (const auto& L : net.layers()) {
    std::vector<double> y(L.out_dim);
    for (std::size_t r = 0; r < L.out_dim; ++r) {
      double acc = L.bias[r];
      for (std::size_t c = 0; c < L.in_dim; ++c) acc += L.weights[r * L.in_dim + c] * x[c];
      if (L.activation == Activation::Relu) m = std::min(m, std::abs(acc));
      y[r] = L.activation == Activation::Relu ? std::max(acc, 0.0)
             : L.activation == Activation::Sigmoid ? 1 / (1 + std::exp(-acc))
                                                   : acc;
    }
    x = std::move(y);
  }
  return m;
}

struct RandomNet {
  nn::Mlp net;
  std::vector<double> input;
};

RandomNet random_small_net(Rng& rng, bool linear) {
  while (true) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> dims{1 + rng.below(10)};
    std::vector<Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
      dims.push_back(1 + rng.below(10));
      const auto pick = rng.below(3);
      acts.push_back(linear ? Activation::Identity
                            : pick == 0 ? Activation::Relu
                            : pick == 1 ? Activation::Sigmoid
                                        : Activation::Identity);
    }
    RandomNet out{nn::init_mlp(dims, acts, rng.next_u64()), {}};
    for (std::size_t l = 0; l < out.net.depth(); ++l) {
      for (auto& b : out.net.layer(l).bias) b = rng.uniform(-0.5, 0.5);
    }
    out.input = ultra::testing::random_vector(rng, dims[0]);
    if (min_abs_relu_preactivation(out.net, out.input) > 1e-3) return out;
  }
}

// Smooth scalar loss: sum_i c_i o_i + 0.5 sum_i o_i^2.
nn::OutputLoss smooth_loss(std::vector<double> c) {
  return [c](std::span<const double> o, std::span<double> g) {
    double l = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      l += c[i] * o[i] + 0.5 * o[i] * o[i];
      g[i] = c[i] + o[i];
    }
    return l;
  };
}

}  // namespace

TEST(InitMlp, ParameterCountBiasAndDeterminism) {
  const std::vector<std::size_t> dims{4, 3, 1};
  const std::vector<Activation> acts{Activation::Relu, Activation::Identity};
  const auto a = nn::init_mlp(dims, acts, 17);
  const auto b = nn::init_mlp(dims, acts, 17);
  EXPECT_EQ(a.parameter_count(), 19u);
  for (std::size_t l = 0; l < a.depth(); ++l) {
    EXPECT_EQ(a.layers()[l].weights, b.layers()[l].weights);
    for (double x : a.layers()[l].bias) EXPECT_EQ(x, 0.0);
  }
  const auto c = nn::init_mlp(dims, acts, 18);
  EXPECT_NE(a.layers()[0].weights, c.layers()[0].weights);
  EXPECT_THROW(nn::init_mlp(std::vector<std::size_t>{4}, {}, 1), std::invalid_argument);
}

TEST(InitMlp, HeScaling) {
  const std::vector<std::size_t> dims{200, 300};
  const std::vector<Activation> acts{Activation::Relu};
  const auto net = nn::init_mlp(dims, acts, 3);
  double s2 = 0.0;
  for (double w : net.layers()[0].weights) s2 += w * w;
  EXPECT_NEAR(s2 / 60000.0, 2.0 / 200.0, 0.0005);
}

TEST(Forward, IdentityAndRelu) {
  nn::DenseLayer eye(3, 3, Activation::Identity);
  for (std::size_t i = 0; i < 3; ++i) eye.weights[i * 3 + i] = 1.0;
  const nn::Mlp id({eye});
  const std::vector<double> x{0.3, -2.0, 5.5};
  const auto t = nn::forward(id, x);
  EXPECT_EQ(std::vector<double>(t.output().begin(), t.output().end()), x);

  nn::DenseLayer neg(2, 2, Activation::Relu);
  neg.weights = {1, 0, 0, 1};
  neg.bias = {-10, -10};
  const nn::Mlp r({neg});
  const auto tr = nn::forward(r, std::vector<double>{1, 2});
  for (double o : tr.output()) EXPECT_EQ(o, 0.0);
  EXPECT_THROW(nn::forward(r, std::vector<double>{1}), std::invalid_argument);
}

TEST(Forward, MatchesByHandOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto [net, x] = random_small_net(rng, false);
    const auto t = nn::forward(net, x);
    const auto ref = reference_forward(net, x);
    ASSERT_EQ(t.output().size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(t.output()[i], ref[i], 1e-12);
  }
}

TEST(Backward, ZeroGradientAndClosedFormIdentityLayer) {
  Rng rng(12);
  nn::Mlp single({nn::DenseLayer(3, 2, Activation::Identity)});
  auto& L = single.layer(0);
  for (auto& w : L.weights) w = rng.uniform(-1, 1);
  const std::vector<double> x{0.5, -1.5, 2.0};
  const auto tape = nn::forward(single, x);

  const auto zero = nn::backward(single, tape, std::vector<double>{0, 0});
  EXPECT_EQ(zero.params.squared_norm(), 0.0);

  const std::vector<double> g{0.25, -2.0};
  const auto res = nn::backward(single, tape, g);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(res.params.weights[0][r * 3 + c], g[r] * x[c]);
    EXPECT_EQ(res.params.bias[0][r], g[r]);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(res.input_grad[c], L.weights[c] * g[0] + L.weights[3 + c] * g[1], 1e-15);
  }
}

TEST(Backward, LinearNetworkMatchesJacobianExactly) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto [net, x] = random_small_net(rng, true);
    // Jacobian of a linear stack: product of weight matrices
    std::vector<std::vector<double>> J;
    const std::size_t in = net.in_dim();
    for (std::size_t i = 0; i < in; ++i) {
      std::vector<double> e(in, 0.0);
      e[i] = 1.0;
      std::vector<double> zero_in(in, 0.0);
      const auto f1 = reference_forward(net, e);
      const auto f0 = reference_forward(net, zero_in);
      std::vector<double> col(f1.size());
      for (std::size_t k = 0; k < f1.size(); ++k) col[k] = f1[k] - f0[k];
      J.push_back(col);
    }
    const auto tape = nn::forward(net, x);
    std::vector<double> g = ultra::testing::random_vector(rng, net.out_dim());
    const auto res = nn::backward(net, tape, g);
    for (std::size_t i = 0; i < in; ++i) {
      double ref = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) ref += J[i][k] * g[k];
      EXPECT_NEAR(res.input_grad[i], ref, 1e-12);
    }
  }
}

TEST(Backward, RejectsStaleTape) {
  auto net = nn::init_mlp(std::vector<std::size_t>{2, 2}, std::vector<Activation>{Activation::Relu}, 1);
  const auto tape = nn::forward(net, std::vector<double>{1, 1});
  net.layer(0).weights[0] += 1.0;
  EXPECT_THROW(nn::backward(net, tape, std::vector<double>{1, 1}), std::invalid_argument);
  auto other = net;
  const auto t2 = nn::forward(net, std::vector<double>{1, 1});
  EXPECT_THROW(nn::backward(other, t2, std::vector<double>{1, 1}), std::invalid_argument);
  EXPECT_THROW(nn::backward(net, t2, std::vector<double>{1}), std::invalid_argument);
}

TEST(GradCheck, LinearNetQuadraticLossIsExact) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto [net, x] = random_small_net(rng, true);
    auto c = ultra::testing::random_vector(rng, net.out_dim());
    // the loss is quadratic in each single parameter, so central differences
    // carry no truncation error and a wide step only reduces roundoff
    nn::GradCheckOptions opts;
    opts.step = 1e-2;
    opts.tolerance = 1e-8;
    const auto rep = nn::grad_check(net, smooth_loss(c), x, opts);
    EXPECT_LT(rep.max_rel_error, 1e-8);
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.checked, net.parameter_count());
  }
}

TEST(GradCheck, RandomNetsAwayFromKinks) {
  Rng rng(15);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [net, x] = random_small_net(rng, false);
    auto c = ultra::testing::random_vector(rng, net.out_dim());
    const auto rep = nn::grad_check(net, smooth_loss(c), x);
    worst = std::max(worst, rep.max_rel_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GradCheck, CorruptedGradientIsFlagged) {
  Rng rng(16);
  auto [net, x] = random_small_net(rng, false);
  const auto loss = smooth_loss(ultra::testing::random_vector(rng, net.out_dim()));
  const auto tape = nn::forward(net, x);
  std::vector<double> og(net.out_dim());
  loss(tape.output(), og);
  auto grads = nn::backward(net, tape, og).params;
  grads.bias.back()[0] += 0.1;
  const auto analytic = grads.views();
  auto params = net.parameters();
  std::vector<double> scratch(net.out_dim());
  const auto rep = nn::check_gradients(params, analytic, [&] {
    const auto t = nn::forward(net, x);
    return loss(t.output(), scratch);
  });
  EXPECT_FALSE(rep.passed());
  EXPECT_GE(rep.flagged, 1u);
}

TEST(GradCheck, NonFiniteLossThrows) {
  auto net = nn::init_mlp(std::vector<std::size_t>{2, 1}, std::vector<Activation>{Activation::Identity}, 1);
  const nn::OutputLoss bad = [](std::span<const double>, std::span<double> g) {
    g[0] = 0;
    return std::nan("");
  };
  EXPECT_THROW(nn::grad_check(net, bad, std::vector<double>{1, 1}), ultra::NonFiniteError);
}

TEST(Adam, TwoStepHandTrace) {
  std::vector<double> theta{1.0};
  const std::vector<double> grad{0.5};
  nn::AdamState st(nn::AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  const std::vector<std::span<double>> p{theta};
  const std::vector<std::span<const double>> g{grad};

  nn::adam_step(p, g, st);
  double m = (1 - 0.9) * 0.5, v = (1 - 0.999) * 0.25;
  double expected = 1.0 - 1e-3 * (m / (1 - 0.9)) / (std::sqrt(v / (1 - 0.999)) + 1e-8);
  EXPECT_NEAR(theta[0], expected, 1e-12);
  EXPECT_EQ(st.t, 1u);

  nn::adam_step(p, g, st);
  m = 0.9 * m + (1 - 0.9) * 0.5;
  v = 0.999 * v + (1 - 0.999) * 0.25;
  expected -= 1e-3 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(theta[0], expected, 1e-12);
  EXPECT_EQ(st.t, 2u);
  // constant gradient: each bias-corrected step is lr * sign(g) up to eps
  EXPECT_NEAR(theta[0], 1.0 - 2e-3, 1e-10);
}

TEST(Adam, ZeroGradientAndZeroLrLeaveParameters) {
  Rng rng(17);
  auto theta = ultra::testing::random_vector(rng, 10);
  const auto orig = theta;
  const std::vector<double> zero(10, 0.0);
  nn::AdamState st;
  const std::vector<std::span<double>> p{theta};
  for (int i = 0; i < 5; ++i) {
    nn::adam_step(p, std::vector<std::span<const double>>{zero}, st);
  }
  EXPECT_EQ(theta, orig);

  const auto g = ultra::testing::random_vector(rng, 10);
  nn::AdamState frozen(nn::AdamConfig{0.0, 0.9, 0.999, 1e-8});
  nn::adam_step(p, std::vector<std::span<const double>>{g}, frozen);
  EXPECT_EQ(theta, orig);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<double> a(3), b(4);
  nn::AdamState st;
  EXPECT_THROW(nn::adam_step(std::vector<std::span<double>>{a},
                             std::vector<std::span<const double>>{b}, st),
               std::invalid_argument);
  nn::AdamConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(LrSchedule, StepDecay) {
  EXPECT_EQ(nn::lr_schedule(1e-4, 0), 1e-4);
  EXPECT_EQ(nn::lr_schedule(1e-4, 99), 1e-4);
  EXPECT_DOUBLE_EQ(nn::lr_schedule(1e-4, 100), 1e-5);
  EXPECT_DOUBLE_EQ(nn::lr_schedule(1e-4, 250), 1e-6);
}

TEST(Forward, DeterministicAcrossCalls) {
  Rng rng(18);
  auto [net, x] = random_small_net(rng, false);
  const auto a = nn::forward(net, x);
  const auto b = nn::forward(net, x);
  EXPECT_EQ(a.activations, b.activations);
}

TEST(Forward, BatchLossIsMeanOfSampleLosses) {
  Rng rng(19);
  auto [net, x0] = random_small_net(rng, false);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(ultra::testing::random_vector(rng, net.in_dim()));
  const auto loss = smooth_loss(std::vector<double>(net.out_dim(), 0.3));
  std::vector<double> scratch(net.out_dim());
  std::vector<double> losses;
  for (const auto& x : batch) losses.push_back(loss(nn::forward(net, x).output(), scratch));
  double forward_order = 0.0, reverse_order = 0.0;
  for (double l : losses) forward_order += l;
  for (auto it = losses.rbegin(); it != losses.rend(); ++it) reverse_order += *it;
  EXPECT_NEAR(forward_order / 8, reverse_order / 8, 1e-12);
}
