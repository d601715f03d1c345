#include <gtest/gtest.h>

#include <random>

#include "fsr/autodiff.hpp"
#include "fsr/grad_check.hpp"
#include "fsr/io.hpp"
#include "fsr/params.hpp"
#include "test_util.hpp"

using namespace fsr;
using V = Var<double>;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), ShapeError);
  Tensor<float> t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FLOAT_EQ(t.sum(), 9.0f);
}

TEST(Ops, MatmulIdentity) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto eye = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(matmul(a, eye).value().to_vector(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Ops, AbsSignRule) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::scalar(-3.5));
  auto y = abs(x);
  EXPECT_EQ(y.value()[0], 3.5);
  tape.backward(y);
  EXPECT_EQ(x.grad()[0], -1.0);
}

TEST(Ops, AbsSubgradientAtZeroIsZero) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::scalar(0.0));
  tape.backward(sum(abs(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Ops, ReluDerivativeAtZeroIsZero) { EXPECT_EQ(activation_derivative(0.0, Activation::relu), 0.0); }

TEST(Ops, ConvPreservesConstantWithUnitDcKernel) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 1, 6, 5}, 2.25));
  Tensor<double> w({1, 1, 3, 3}, 0.0);
  // Unit DC gain, concentrated at the center so zero padding at the border does not matter.
  w[4] = 1.0;
  auto y = conv2d(x, tape.constant(w));
  for (double v : y.value().data()) EXPECT_EQ(v, 2.25);

  // Full 3x3 averaging kernel: interior pixels stay constant.
  auto avg = conv2d(x, tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0 / 9.0)));
  for (std::size_t yy = 1; yy + 1 < 6; ++yy)
    for (std::size_t xx = 1; xx + 1 < 5; ++xx) EXPECT_NEAR(avg.value().at3(0, yy, xx), 2.25, 1e-15);
}

TEST(Ops, ConvMatchesDirectLoop) {
  std::mt19937_64 rng(3);
  const auto x = test::random_tensor({2, 3, 5, 4}, rng);
  const auto w = test::random_tensor({2, 3, 3, 3}, rng);
  const auto b = test::random_tensor({2}, rng);
  Tape<double> tape;
  auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 2; ++o)
      for (long yy = 0; yy < 5; ++yy)
        for (long xx = 0; xx < 4; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < 3; ++c)
            for (long dy = -1; dy <= 1; ++dy)
              for (long dx = -1; dx <= 1; ++dx) {
                const long sy = yy + dy, sx = xx + dx;
                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
                acc += w[((o * 3 + c) * 3 + std::size_t(dy + 1)) * 3 + std::size_t(dx + 1)] *
                       x[((n * 3 + c) * 5 + std::size_t(sy)) * 4 + std::size_t(sx)];
              }
          EXPECT_NEAR(y[((n * 2 + o) * 5 + std::size_t(yy)) * 4 + std::size_t(xx)], acc, 1e-12);
        }
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({3, 3}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("(2,3)"), std::string::npos);
    EXPECT_NE(msg.find("(3,3)"), std::string::npos);
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Ops, ConcatAndSliceRoundTrip) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 1, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor<double>({2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12}));
  auto c = concat<double>({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 2}));
  EXPECT_EQ(c.value().to_vector(), (std::vector<double>{1, 2, 5, 6, 7, 8, 3, 4, 9, 10, 11, 12}));
  EXPECT_EQ(slice(c, 1, 1, 2).value(), b.value());
}

TEST(Ops, ColumnStandardize) {
  Tape<double> tape;
  auto m = tape.constant(Tensor<double>({3, 2}, {4, 1, 4, 2, 4, 3}));
  auto y = column_standardize(m).value();
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(y(r, 0), 0.0);
  const double sigma = std::sqrt(2.0 / 3.0 + 1e-5);
  EXPECT_NEAR(y(0, 1), -1.0 / sigma, 1e-15);
  EXPECT_NEAR(y(2, 1), 1.0 / sigma, 1e-15);

  // Already standardized column: unchanged up to the eps regularization.
  auto z = column_standardize(tape.constant(Tensor<double>({2, 1}, {-1.0, 1.0}))).value();
  EXPECT_NEAR(z[0], -1.0, 1e-5);
  EXPECT_NEAR(z[1], 1.0, 1e-5);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2, 2}, {1, -2, 3, 0.5}));
  tape.backward(sum(x));
  EXPECT_EQ(x.grad().to_vector(), (std::vector<double>(4, 1.0)));
}

TEST(Backward, MeanOfSquares) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}, {1, 2}));
  tape.backward(mean(mul(x, x)));
  EXPECT_EQ(x.grad().to_vector(), (std::vector<double>{1, 2}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, ReplayIsBitIdentical) {
  std::mt19937_64 rng(11);
  Tape<double> tape;
  auto x = tape.variable(test::random_tensor({6, 4}, rng));
  auto w = tape.variable(test::random_tensor({4, 4}, rng));
  auto loss = mean(activate(column_standardize(matmul(x, w)), Activation::gelu));
  tape.backward(loss);
  const auto gx = x.grad(), gw = w.grad();
  tape.backward(loss);
  EXPECT_EQ(x.grad(), gx);
  EXPECT_EQ(w.grad(), gw);
}

TEST(Backward, LinearInLoss) {
  std::mt19937_64 rng(5);
  const auto xv = test::random_tensor({5, 3}, rng);
  const auto wv = test::random_tensor({3, 3}, rng);
  const double alpha = 0.7, beta = -1.9;
  auto build = [&](Tape<double>& tape, V x, int which) {
    auto h = matmul(x, tape.constant(wv));
    auto l1 = sum(mul(h, h));
    auto l2 = mean(activate(h, Activation::elu));
    if (which == 1) return l1;
    if (which == 2) return l2;
    return add(scale(l1, alpha), scale(l2, beta));
  };
  std::vector<Tensor<double>> grads;
  for (int which : {1, 2, 3}) {
    Tape<double> tape;
    auto x = tape.variable(xv);
    tape.backward(build(tape, x, which));
    grads.push_back(x.grad());
  }
  for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_NEAR(grads[2][i], alpha * grads[0][i] + beta * grads[1][i], 1e-10);
}

TEST(Backward, CheckedModeNamesProducingOp) {
  Tape<double> tape;
  tape.set_check_finite(true);
  auto x = tape.constant(Tensor<double>::scalar(1000.0));
  try {
    exp(x);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos);
  }
}

TEST(GradCheck, LinearLayer) {
  std::mt19937_64 rng(1);
  const auto r = test::random_tensor({4, 3}, rng);
  auto f = [&](Tape<double>& t, const std::vector<V>& v) { return sum(mul(add_bias(matmul(v[0], v[1]), v[2]), t.constant(r))); };
  const auto rep = grad_check(f, {test::random_tensor({4, 5}, rng), test::random_tensor({5, 3}, rng), test::random_tensor({3}, rng)});
  EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
  EXPECT_EQ(rep.checked, 20u + 15u + 3u);
}

TEST(GradCheck, GeluChain) {
  std::mt19937_64 rng(2);
  const auto w1 = test::random_tensor({4, 4}, rng), w2 = test::random_tensor({4, 4}, rng);
  auto f = [&](Tape<double>& t, const std::vector<V>& v) {
    auto h = activate(matmul(v[0], t.constant(w1)), Activation::gelu);
    h = activate(matmul(h, t.constant(w2)), Activation::gelu);
    return mean(mul(h, h));
  };
  const auto rep = grad_check(f, {test::random_tensor({3, 4}, rng)});
  EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
}

TEST(GradCheck, ColumnStandardize) {
  std::mt19937_64 rng(3);
  const auto r = test::random_tensor({6, 3}, rng);
  auto f = [&](Tape<double>& t, const std::vector<V>& v) { return sum(mul(column_standardize(v[0]), t.constant(r))); };
  const auto rep = grad_check(f, {test::random_tensor({6, 3}, rng)});
  EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
}

TEST(GradCheck, NonFiniteIntermediateIdentifiesOp) {
  auto f = [](Tape<double>&, const std::vector<V>& v) { return sum(exp(scale(v[0], 1000.0))); };
  try {
    grad_check(f, {Tensor<double>::scalar(1.0)});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos);
  }
}

// Every registered op on 20 random shapes/seeds.
class OpGradCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradCheck, TwentySeeds) {
  const GradCase* c = find_grad_case(GetParam());
  ASSERT_NE(c, nullptr);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = c->run(seed);
    EXPECT_LT(rep.max_rel_error, 1e-4) << GetParam() << " seed " << seed << " worst " << rep.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Registry, OpGradCheck,
                         ::testing::Values("add", "sub", "mul", "scale", "abs", "exp", "relu", "gelu", "leaky_relu",
                                           "elu", "selu", "transpose", "sum", "mean", "reshape",
                                           "layer_stat_normalize", "column_standardize", "add_bias", "matmul",
                                           "concat", "slice", "conv2d", "gather_weighted", "spectral_resize",
                                           "zero_interleave", "descend", "ascend"));

// Module compositions; the two large graphs perturb ~10^3 scalars each, so fewer seeds.
class CompositeGradCheck : public ::testing::TestWithParam<std::pair<std::string, int>> {};

TEST_P(CompositeGradCheck, Seeds) {
  const auto& [name, seeds] = GetParam();
  const GradCase* c = find_grad_case(name);
  ASSERT_NE(c, nullptr);
  for (int seed = 0; seed < seeds; ++seed) {
    const auto rep = c->run(std::uint64_t(seed));
    EXPECT_GT(rep.checked, 0u);
    EXPECT_LT(rep.max_rel_error, 1e-4) << name << " seed " << seed << " worst " << rep.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Registry, CompositeGradCheck,
                         ::testing::Values(std::make_pair(std::string("linear"), 20),
                                           std::make_pair(std::string("gelu_chain"), 20),
                                           std::make_pair(std::string("galerkin_attention"), 20),
                                           std::make_pair(std::string("sampler_render"), 20),
                                           std::make_pair(std::string("encoder"), 5),
                                           std::make_pair(std::string("decoder"), 1),
                                           std::make_pair(std::string("pipeline"), 1)),
                         [](const auto& info) { return info.param.first; });

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint ck;
  ck.put("a.w", Tensor<float>({2, 3}, {1.f, -2.f, 3.5f, 1e-30f, 7.f, -0.f}));
  ck.put_scalar("meta/x", 42);
  const std::string bytes = ck.serialize();
  EXPECT_EQ(bytes.substr(0, 8), "FSRCKPT1");
  const Checkpoint back = Checkpoint::deserialize(bytes);
  ASSERT_EQ(back.entries().size(), 2u);
  EXPECT_EQ(back.at("a.w"), ck.at("a.w"));
  EXPECT_EQ(back.scalar("meta/x"), 42.0);
  EXPECT_EQ(back.serialize(), bytes);
}

TEST(Checkpoint, LayoutMatchesFormat) {
  Checkpoint ck;
  ck.put("w", Tensor<float>({1}, {1.0f}));
  const std::string b = ck.serialize();
  // magic, u32 name length, name, u32 rank, u32 extent, one f32
  ASSERT_EQ(b.size(), 8u + 4 + 1 + 4 + 4 + 4);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 'w');
  EXPECT_EQ(b[13], 1);
  EXPECT_EQ(b[17], 1);
  EXPECT_EQ(static_cast<unsigned char>(b[24]), 0x3F);  // 1.0f = 0x3F800000, little endian
  EXPECT_EQ(static_cast<unsigned char>(b[23]), 0x80);
}

TEST(Checkpoint, TruncatedInputReportsOffset) {
  Checkpoint ck;
  ck.put("w", Tensor<float>({4}, 1.0f));
  const std::string b = ck.serialize();
  try {
    Checkpoint::deserialize(b.substr(0, b.size() - 3));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 21"), std::string::npos) << e.what();
  }
}
