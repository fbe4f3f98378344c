#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "qexpert/tensor.hpp"

using namespace qexpert;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST(Tensor, DataLengthMatchesShape) {
  Tensor<double> t({3, 4});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_FALSE(t.has_grad());
  t.enable_grad();
  EXPECT_EQ(t.grad().size(), 12u);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor<double>({0, 2}), ShapeError);
}

TEST(ConvText, HandComputedExample) {
  Tensor<double> input({3, 1}, {1, 2, 3});
  Tensor<double> filters({1, 2, 1}, {1, 1});
  Tensor<double> bias({1}, {0});
  const auto out = nn::conv_text(input, filters, bias);
  ASSERT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(out[0], 3.0);
  EXPECT_DOUBLE_EQ(out[1], 5.0);
}

TEST(ConvText, OutputHeightLaw) {
  std::mt19937_64 rng(1);
  const auto input = random_tensor({50, 4}, rng);
  const std::size_t expected[] = {49, 48, 47, 46};
  for (std::size_t m = 2; m <= 5; ++m) {
    const auto filters = random_tensor({3, m, 4}, rng);
    const auto out = nn::conv_text(input, filters, Tensor<double>({3}));
    EXPECT_EQ(out.dim(0), expected[m - 2]);
  }
  const auto full = nn::conv_text(input, random_tensor({2, 50, 4}, rng), Tensor<double>({2}));
  EXPECT_EQ(full.dim(0), 1u);
}

TEST(ConvText, ShapeMismatchNamesBothShapes) {
  Tensor<double> input({5, 3});
  Tensor<double> filters({2, 2, 4});
  try {
    nn::conv_text(input, filters, Tensor<double>({2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[5x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2x4]"), std::string::npos) << msg;
  }
  EXPECT_THROW(nn::conv_text(Tensor<double>({2, 3}), Tensor<double>({1, 3, 3}), Tensor<double>({1})), ShapeError);
}

TEST(ConvText, MatchesDirectSum) {
  std::mt19937_64 rng(7);
  const auto input = random_tensor({9, 5}, rng);
  const auto filters = random_tensor({4, 3, 5}, rng);
  const auto bias = random_tensor({4}, rng);
  const auto out = nn::conv_text(input, filters, bias);
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t f = 0; f < 4; ++f) {
      double acc = bias[f];
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) acc += input.at(t + i, j) * filters[(f * 3 + i) * 5 + j];
      EXPECT_NEAR(out.at(t, f), acc, 1e-12);
    }
}

TEST(Relu, Definition) {
  Tensor<double> x({3}, {-1, 0, 2});
  const auto y = nn::relu(x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0, 0, 2}));
  Tensor<double> neg({4}, {-1, -2, -0.5, -3});
  const auto zeroed = nn::relu(neg);
  for (auto v : zeroed.data()) EXPECT_EQ(v, 0.0);
  const std::vector<double> dy{1, 1, 1};
  const auto dx = nn::relu_backward<double>(x.data(), dy);
  EXPECT_EQ(dx, (std::vector<double>{0, 0, 1}));
}

TEST(Relu, IdempotentAndBounded) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_tensor({17}, rng, -5, 5);
    const auto once = nn::relu(x);
    const auto twice = nn::relu(once);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_EQ(once[i], twice[i]);
      EXPECT_GE(once[i], 0.0);
      EXPECT_LE(once[i], std::abs(x[i]));
    }
  }
}

TEST(MaxPool, ValuesAndTieRule) {
  const std::vector<double> v{0.1, 0.9, 0.3};
  const auto r = nn::max_pool_1max<double>(v);
  EXPECT_DOUBLE_EQ(r.value, 0.9);
  EXPECT_EQ(r.index, 1u);
  const std::vector<double> c(6, 2.5);
  const auto rc = nn::max_pool_1max<double>(c);
  EXPECT_DOUBLE_EQ(rc.value, 2.5);
  EXPECT_EQ(rc.index, 0u);
  const auto g = nn::max_pool_1max_backward<double>(6, rc.index, 1.5);
  EXPECT_EQ(g, (std::vector<double>{1.5, 0, 0, 0, 0, 0}));
  EXPECT_THROW(nn::max_pool_1max<double>(std::vector<double>{}), std::invalid_argument);
}

TEST(MaxPool, MatchesLinearScan) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(49);
    for (auto& x : v) x = d(rng);
    double best = -INFINITY;
    for (auto x : v) best = x > best ? x : best;
    EXPECT_EQ(nn::max_pool_1max<double>(v).value, best);
  }
}

TEST(Linear, IdentityAndExample) {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  const std::vector<double> x{1, 1};
  EXPECT_EQ(nn::linear<double>(x, eye, Tensor<double>({2})), x);
  EXPECT_EQ(nn::linear<double>(x, eye, Tensor<double>({2}, {1, 1})), (std::vector<double>{2, 2}));
  EXPECT_THROW(nn::linear<double>(std::vector<double>{1, 2, 3}, eye, Tensor<double>({2})), ShapeError);
}

TEST(Linear, MatchesNaiveMatmul) {
  std::mt19937_64 rng(5);
  const auto w = random_tensor({13, 7}, rng);
  const auto b = random_tensor({7}, rng);
  const auto x = random_tensor({13}, rng);
  const auto y = nn::linear<double>(x.data(), w, b);
  for (std::size_t j = 0; j < 7; ++j) {
    double acc = b[j];
    for (std::size_t i = 0; i < 13; ++i) acc += x[i] * w.at(i, j);
    EXPECT_NEAR(y[j], acc, 1e-12);
  }
}

TEST(Dropout, IdentityCases) {
  std::mt19937_64 rng(0);
  const std::vector<double> x{1, -2, 3, 4};
  EXPECT_EQ(nn::dropout_apply<double>(x, 0.0, nn::Mode::train, rng, nullptr), x);
  EXPECT_EQ(nn::dropout_apply<double>(x, 0.5, nn::Mode::eval, rng, nullptr), x);
  EXPECT_THROW(nn::dropout_apply<double>(x, 1.0, nn::Mode::train, rng, nullptr), std::invalid_argument);
  EXPECT_THROW(nn::dropout_apply<double>(x, -0.1, nn::Mode::eval, rng, nullptr), std::invalid_argument);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> d(0.5, 1.5);
  std::vector<double> x(100000);
  for (auto& v : x) v = d(rng);
  nn::DropoutMask<double> mask;
  const auto y = nn::dropout_apply<double>(x, 0.5, nn::Mode::train, rng, &mask);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
    EXPECT_TRUE(y[i] == 0.0 || std::abs(y[i] - 2.0 * x[i]) < 1e-12);
  }
  EXPECT_NEAR(my / mx, 1.0, 0.02);
  const auto g = nn::dropout_backward<double>(mask, std::vector<double>(x.size(), 1.0));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(g[i], y[i] == 0.0 ? 0.0 : 2.0);
}

TEST(Cosine, Examples) {
  const std::vector<double> v{0.3, -1.2, 4.0};
  EXPECT_NEAR(nn::cosine<double>(v, v), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(nn::cosine<double>(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(nn::cosine<double>(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.70710678, 1e-8);
  EXPECT_EQ(nn::cosine<double>(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
  EXPECT_THROW(nn::cosine<double>(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

TEST(Cosine, BoundedAndScaleInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-3, 3);
  std::uniform_real_distribution<double> alpha(0.01, 100);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> u(8), v(8);
    for (auto& x : u) x = d(rng);
    for (auto& x : v) x = d(rng);
    const double c = nn::cosine<double>(u, v);
    EXPECT_LE(c, 1.0 + 1e-9);
    EXPECT_GE(c, -1.0 - 1e-9);
    const double a = alpha(rng);
    std::vector<double> au(u);
    for (auto& x : au) x *= a;
    EXPECT_NEAR(nn::cosine<double>(au, v), c, 1e-12);
  }
}

TEST(Cosine, ZeroNormHasNoGradient) {
  std::vector<double> gu(2, 0.0), gv(2, 0.0);
  nn::cosine_backward<double>(std::vector<double>{0, 0}, std::vector<double>{1, 2}, 1.0, gu, gv);
  EXPECT_EQ(gu, (std::vector<double>{0, 0}));
  EXPECT_EQ(gv, (std::vector<double>{0, 0}));
}

TEST(ConvSpec, Validation) {
  ConvSpec spec;
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(spec.output_height(2), 49u);
  spec.region_sizes = {51};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.region_sizes = {2};
  spec.filters_per_size = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}
