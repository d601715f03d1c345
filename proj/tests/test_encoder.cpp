#include <gtest/gtest.h>

#include "fsr/encoder.hpp"
#include "test_util.hpp"

using namespace fsr;

namespace {

struct Built {
  ParamStore<double> store;
  Encoder encoder;
};

Built make(const EncoderConfig& cfg, std::uint64_t seed = 7) {
  Built s;
  std::mt19937_64 rng(seed);
  s.encoder = Encoder::create(s.store, cfg, rng);
  return s;
}

Tensor<double> encode(const Built& s, const Tensor<double>& x) {
  Tape<double> tape;
  const Bound<double> p(tape, s.store, false);
  return s.encoder.encode(p, tape.constant(x)).z.value();
}

// Fraction of parameter scalars with a non-zero gradient of a random projection of the output.
double grad_coverage(const Built& s, const Tensor<double>& x, std::mt19937_64& rng) {
  Tape<double> tape;
  const Bound<double> p(tape, s.store, true);
  const Var<double> z = s.encoder.encode(p, tape.constant(x)).z;
  tape.backward(sum(mul(z, tape.constant(test::random_tensor(z.shape(), rng)))));
  std::size_t nonzero = 0, total = 0;
  for (const auto& g : p.grads())
    for (double v : g.data()) {
      nonzero += v != 0.0;
      ++total;
    }
  return double(nonzero) / double(total);
}

}  // namespace

TEST(Encoder, ShapeAtRatioTwo) {
  const Built s = make({.in_channels = 1, .channels = 32, .blocks = 2, .ratio = 2});
  std::mt19937_64 rng(1);
  EXPECT_EQ(encode(s, test::random_tensor({1, 1, 16, 16}, rng)).shape(), (Shape{1, 32, 32, 32}));
}

TEST(Encoder, ExtentsScaleWithRatio) {
  std::mt19937_64 rng(1);
  for (std::size_t r : {1, 2, 4}) {
    const Built s = make({.in_channels = 2, .channels = 4, .blocks = 1, .ratio = r});
    EXPECT_EQ(encode(s, test::random_tensor({1, 2, 5, 7}, rng)).shape(), (Shape{1, 4, 5 * r, 7 * r}));
  }
}

TEST(Encoder, RatioOneUpsampleIsIdentity) {
  const Built s = make({.in_channels = 3, .channels = 4, .blocks = 1, .ratio = 1});
  std::mt19937_64 rng(2);
  const Tensor<double> x = test::random_tensor({1, 3, 6, 6}, rng);
  Tape<double> tape;
  const Bound<double> p(tape, s.store, false);
  EXPECT_TRUE(test::bitwise_equal(s.encoder.hybrid_upsample(p, tape.constant(x)).value(), x));
}

TEST(Encoder, UpsampleIsLinearWithoutBias) {
  const Built s = make({.in_channels = 2, .channels = 4, .blocks = 0, .ratio = 4});
  Tape<double> tape;
  const Bound<double> p(tape, s.store, false);
  EXPECT_EQ(test::max_abs(s.encoder.hybrid_upsample(p, tape.constant(Tensor<double>(Shape{1, 2, 4, 4}))).value()), 0.0);
  std::mt19937_64 rng(3);
  const Tensor<double> a = test::random_tensor({1, 2, 4, 4}, rng), b = test::random_tensor({1, 2, 4, 4}, rng);
  Tensor<double> ab = a;
  for (std::size_t i = 0; i < ab.size(); ++i) ab[i] = 2.0 * a[i] - b[i];
  const Tensor<double> ua = s.encoder.hybrid_upsample(p, tape.constant(a)).value();
  const Tensor<double> ub = s.encoder.hybrid_upsample(p, tape.constant(b)).value();
  const Tensor<double> uab = s.encoder.hybrid_upsample(p, tape.constant(ab)).value();
  for (std::size_t i = 0; i < uab.size(); ++i) EXPECT_NEAR(uab[i], 2.0 * ua[i] - ub[i], 1e-12);
}

TEST(Encoder, Deterministic) {
  const Built s = make({.in_channels = 1, .channels = 8, .blocks = 2, .ratio = 2});
  std::mt19937_64 rng(4);
  const Tensor<double> x = test::random_tensor({1, 1, 8, 8}, rng);
  EXPECT_TRUE(test::bitwise_equal(encode(s, x), encode(s, x)));
  const Built again = make({.in_channels = 1, .channels = 8, .blocks = 2, .ratio = 2});
  EXPECT_TRUE(test::bitwise_equal(encode(again, x), encode(s, x)));
}

TEST(Encoder, ZeroWeightsGiveZero) {
  Built s = make({.in_channels = 1, .channels = 8, .blocks = 3, .ratio = 4});
  for (auto& v : s.store.values()) v.fill(0.0);
  std::mt19937_64 rng(5);
  EXPECT_EQ(test::max_abs(encode(s, test::random_tensor({1, 1, 6, 6}, rng))), 0.0);
}

TEST(Encoder, EveryParameterGetsGradient) {
  std::mt19937_64 rng(6);
  for (std::size_t r : {1, 2, 4}) {
    const Built s = make({.in_channels = 1, .channels = 8, .blocks = 2, .ratio = r});
    EXPECT_GE(grad_coverage(s, test::random_tensor({1, 1, 6, 6}, rng), rng), 0.99) << "r=" << r;
  }
}

TEST(Encoder, InvalidConfig) {
  EXPECT_THROW(make({.ratio = 3}), Error);
  EXPECT_THROW(make({.in_channels = 4, .channels = 2}), Error);
}

TEST(Encoder, ChannelMismatch) {
  const Built s = make({.in_channels = 2, .channels = 4, .blocks = 1, .ratio = 1});
  std::mt19937_64 rng(1);
  EXPECT_THROW(encode(s, test::random_tensor({1, 1, 4, 4}, rng)), ShapeError);
  EXPECT_THROW(encode(s, test::random_tensor({2, 4, 4}, rng)), ShapeError);
}

TEST(Encoder, RecordsCellSizes) {
  const Built s = make({.in_channels = 1, .channels = 2, .blocks = 0, .ratio = 2});
  Tape<double> tape;
  const Bound<double> p(tape, s.store, false);
  const auto map = s.encoder.encode(p, tape.constant(Tensor<double>(Shape{1, 1, 5, 10})), Box{0.0, 4.0, 0.0, 1.0});
  EXPECT_DOUBLE_EQ(map.dx(), 0.2);
  EXPECT_DOUBLE_EQ(map.dy(), 0.1);
}
