#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gradcheck_cases.hpp"
#include "mockforge/tensor.hpp"

using namespace mockforge;
using namespace mockforge::tensor;

TEST(Ops, MatmulShape) {
  const auto c = matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
  EXPECT_EQ(c.shape(), (Shape{2, 4}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 4})), ShapeError);
}

TEST(Ops, ShapeErrorNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[3x2]"), std::string::npos);
  }
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  const auto s = softmax(Tensor::from({2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
}

TEST(Ops, SoftmaxStableForLargeLogits) {
  const auto s = softmax(Tensor::from({3}, {1000.0, 1000.0, -1000.0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(2), 0.0);
}

TEST(Ops, LayerNormOfConstantIsZero) {
  const auto y = layer_norm(Tensor::full({1, 4}, 3.0), Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.values()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(v, 0.0);
  }
}

TEST(Ops, ConcatAndSlice) {
  const auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor::from({2, 1}, {5, 6});
  const auto c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()), (std::vector<double>{1, 2, 5, 3, 4, 6}));
  const auto s = slice(c, 1, 1, 3);
  EXPECT_EQ(std::vector<double>(s.values().begin(), s.values().end()), (std::vector<double>{2, 5, 4, 6}));
}

TEST(Backward, LinearMapGradIsInputPerRow) {
  Tensor w = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  const Tensor x = Tensor::from({2, 1}, {3.0, -2.0});
  backward(sum(matmul(w, x)));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{3, -2, 3, -2}));
}

TEST(Backward, NonParticipatingParameterGetsZero) {
  ParameterStore ps;
  std::mt19937_64 rng(1);
  Tensor& used = ps.add_xavier("used", {2, 2}, rng);
  Tensor& idle = ps.add_xavier("idle", {3}, rng);
  ps.zero_grad();
  backward(sum(used));
  ASSERT_EQ(idle.grad().size(), 3u);
  for (double g : idle.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SoftmaxNllAtUniformLogits) {
  Tensor logits = Tensor::from({1, 2}, {0.0, 0.0}, true);
  const std::vector<int> target{0};
  backward(scale(sum(pick(log_softmax(logits), target)), -1.0));
  EXPECT_NEAR(logits.grad()[0], -0.5, 1e-12);
  EXPECT_NEAR(logits.grad()[1], 0.5, 1e-12);
}

TEST(Backward, NonScalarLossRejected) { EXPECT_THROW(backward(Tensor::zeros({2}, true)), ShapeError); }

TEST(Backward, IsLinear) {
  std::mt19937_64 rng(4);
  Tensor w = fixtures::random_tensor({3, 3}, rng);
  const Tensor x = fixtures::random_tensor({2, 3}, rng, false);
  auto f = [&] { return sum(exp(matmul(x, w))); };
  auto g = [&] { return sum(mul(matmul(x, w), matmul(x, w))); };
  const double a = 0.7, b = -1.3;
  auto grad_of = [&](auto fn) {
    w.zero_grad();
    backward(fn());
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  const auto gf = grad_of(f);
  const auto gg = grad_of(g);
  const auto gc = grad_of([&] { return add(scale(f(), a), scale(g(), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-9);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  Tensor x = Tensor::from({1}, {2.0}, true);
  const Tensor y = mul(x, x);
  backward(add(y, y));  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(NoGrad, DisablesRecording) {
  Tensor x = Tensor::from({1}, {2.0}, true);
  NoGradGuard guard;
  EXPECT_FALSE(mul(x, x).requires_grad());
}

TEST(GradCheck, Polynomial) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  EXPECT_LT(grad_check([&] { return mul(x, x); }, {x}), 1e-6);
  x.zero_grad();
  backward(mul(x, x));
  EXPECT_NEAR(x.grad()[0], 6.0, 1e-12);
}

TEST(GradCheck, ConstantFunction) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  EXPECT_EQ(grad_check([&] { return add(scale(sum(x), 0.0), Tensor::scalar(4.0)); }, {x}), 0.0);
}

TEST(GradCheck, CatchesWrongGradient) {
  // The second factor is a constant copy, so backward sees d/dx = x while the true derivative is 2x.
  Tensor x = Tensor::from({2}, {1.5, -0.7}, true);
  auto f = [&] { return sum(mul(x, Tensor::from({2}, {x.values()[0], x.values()[1]}))); };
  EXPECT_GT(grad_check(f, {x}), 0.3);
}

TEST(GradCheck, KinkInsideStencilIsNotAnError) {
  Tensor x = Tensor::from({1}, {2e-4}, true);
  EXPECT_LT(grad_check([&] { return sum(relu(x)); }, {x}), 1e-6);
}

TEST(GradCheck, TwoLayerMlp) {
  std::mt19937_64 rng(21);
  Tensor w1 = fixtures::random_tensor({4, 6}, rng), b1 = fixtures::random_tensor({6}, rng);
  Tensor w2 = fixtures::random_tensor({6, 3}, rng), b2 = fixtures::random_tensor({3}, rng);
  const Tensor x = fixtures::random_tensor({5, 4}, rng, false);
  auto f = [&] { return sum(log_softmax(add(matmul(relu(add(matmul(x, w1), b1)), w2), b2))); };
  EXPECT_LT(grad_check(f, {w1, b1, w2, b2}, {.max_coords_per_param = 10}), 1e-3);
}

TEST(GradCheck, EveryOpOnHundredRandomConfigs) {
  for (const auto& c : fixtures::op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) worst = std::max(worst, c.run(seed));
    EXPECT_LT(worst, 1e-3) << c.name;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore ps;
  Tensor& p = ps.add("p", Tensor::from({1}, {0.5}));
  Adam opt(ps, {.learning_rate = 0.001});
  p.mutable_grad()[0] = 1.0;
  opt.step();
  EXPECT_NEAR(p.at(0) - 0.5, -0.001, 1e-9);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParameterStore ps;
  Tensor& p = ps.add("p", Tensor::from({2}, {0.5, -1.0}));
  Adam opt(ps);
  ps.zero_grad();
  opt.step();
  EXPECT_EQ(p.at(0), 0.5);
  EXPECT_EQ(p.at(1), -1.0);
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
  auto run = [] {
    ParameterStore ps;
    Tensor& p = ps.add("p", Tensor::from({3}, {0.1, 0.2, 0.3}));
    Adam opt(ps);
    for (int i = 0; i < 5; ++i) {
      ps.zero_grad();
      backward(sum(mul(p, p)));
      opt.step();
    }
    return std::vector<double>(p.values().begin(), p.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NanGradientNamesParameter) {
  ParameterStore ps;
  Tensor& p = ps.add("decoder.head.w", Tensor::from({1}, {0.0}));
  Adam opt(ps);
  p.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step();
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.head.w"), std::string::npos);
  }
}

TEST(Snapshot, RoundTripAndShapeCheck) {
  std::mt19937_64 rng(2);
  ParameterStore a;
  a.add_xavier("w", {3, 4}, rng);
  a.add_constant("b", {4}, 0.25);
  const auto [manifest, blob] = snapshot(a);
  EXPECT_EQ(manifest["parameters"]["b"]["offset"].get<std::size_t>(), 12 * sizeof(double));

  ParameterStore b;
  b.add_constant("w", {3, 4}, 0.0);
  b.add_constant("b", {4}, 0.0);
  restore(b, manifest, blob);
  EXPECT_EQ(std::vector<double>(b.get("w").values().begin(), b.get("w").values().end()),
            std::vector<double>(a.get("w").values().begin(), a.get("w").values().end()));

  ParameterStore c;
  c.add_constant("w", {4, 3}, 0.0);
  c.add_constant("b", {4}, 0.0);
  EXPECT_THROW(restore(c, manifest, blob), DataError);
}
