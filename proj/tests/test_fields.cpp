#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "fsr/fields.hpp"
#include "fsr/io.hpp"
#include "fsr/spectral.hpp"
#include "test_util.hpp"

using namespace fsr;

namespace {

// Field on [-1, 1]^2 sampled at cell centers.
template <typename F>
GridField sampled(std::size_t ny, std::size_t nx, F f, std::size_t channels = 1) {
  GridField g(Tensor<double>(Shape{channels, ny, nx}));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) g.values.at3(c, y, x) = f(c, g.y_center(y), g.x_center(x));
  return g;
}

// Modes up to 3 cycles over the period 2.
GridField band_limited(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double a[4][4], b[4][4];
  for (auto& r : a)
    for (double& v : r) v = u(rng);
  for (auto& r : b)
    for (double& v : r) v = u(rng);
  return sampled(n, n, [&](std::size_t, double y, double x) {
    double s = 0.0;
    for (int ky = 0; ky <= 3; ++ky)
      for (int kx = 0; kx <= 3; ++kx) {
        const double ph = std::numbers::pi * (ky * y + kx * x);
        s += a[ky][kx] * std::cos(ph) + b[ky][kx] * std::sin(ph + 0.3);
      }
    return s;
  });
}

}  // namespace

TEST(MakePair, ExtentsFollowRoundedScale) {
  const auto hr = band_limited(64, 1);
  const auto pair = make_pair(hr, 4.0);
  EXPECT_EQ(pair.lr.ny(), 16u);
  EXPECT_EQ(pair.lr.nx(), 16u);
  EXPECT_DOUBLE_EQ(pair.scale_x, 4.0);
  EXPECT_EQ(pair.lr.box, hr.box);

  const auto odd = make_pair(hr, 2.7);
  EXPECT_EQ(odd.lr.ny(), 24u);  // round(23.7)
}

TEST(MakePair, UnitScaleIsBitwiseCopy) {
  const auto hr = band_limited(24, 2);
  EXPECT_EQ(make_pair(hr, 1.0).lr.values, hr.values);
}

TEST(MakePair, SpectralRoundTripRecoversBandLimitedField) {
  const auto hr = band_limited(64, 3);
  const auto pair = make_pair(hr, 2.0);
  const auto back = spectral::resize(pair.lr.values, 64, 64);
  EXPECT_LT(test::max_abs_diff(back, hr.values) / test::max_abs(hr.values), 1e-10);
}

TEST(MakePair, RejectsTinyLr) {
  const auto hr = band_limited(32, 4);
  EXPECT_THROW(make_pair(hr, 5.0), Error);
  EXPECT_THROW(make_pair(hr, 0.5), Error);
}

TEST(MakePair, BicubicDegradationHasLrExtents) {
  const auto hr = band_limited(32, 5);
  const auto pair = make_pair(hr, 2.0, Degradation::bicubic);
  EXPECT_EQ(pair.lr.values.shape(), (Shape{1, 16, 16}));
}

TEST(Crop, FullExtentIsIdentity) {
  const auto f = band_limited(20, 6);
  std::mt19937_64 rng(0);
  const auto c = random_crop(f, 20, 20, rng);
  EXPECT_EQ(c.values, f.values);
  EXPECT_EQ(c.box, Box{});
}

TEST(Crop, RandomCropsStayInBoundsAndMatchSource) {
  GridField f(Tensor<double>(Shape{1, 64, 64}));
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = double(i);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto c = random_crop(f, 16, 16, rng);
    ASSERT_EQ(c.values.shape(), (Shape{1, 16, 16}));
    const auto origin = std::size_t(c.values[0]);
    const std::size_t y0 = origin / 64, x0 = origin % 64;
    ASSERT_LE(y0 + 16, 64u);
    ASSERT_LE(x0 + 16, 64u);
    EXPECT_EQ(c.values.at3(0, 15, 15), double((y0 + 15) * 64 + x0 + 15));
  }
}

TEST(Crop, SeededCropsAreDeterministic) {
  const auto f = band_limited(48, 8);
  std::mt19937_64 a(99), b(99);
  for (int t = 0; t < 10; ++t) EXPECT_EQ(random_crop(f, 12, 9, a).values, random_crop(f, 12, 9, b).values);
}

TEST(Crop, CenterAndOversizeWindow) {
  GridField f(Tensor<double>(Shape{1, 5, 5}));
  f.values.at3(0, 2, 2) = 1.0;
  EXPECT_EQ(center_crop(f, 1, 1).values[0], 1.0);
  EXPECT_THROW(crop(f, 3, 0, 3, 1), Error);
}

TEST(Metrics, IdenticalFields) {
  const auto f = band_limited(32, 9);
  EXPECT_EQ(mse(f.values, f.values), 0.0);
  EXPECT_TRUE(std::isinf(psnr(f.values, f.values)));
  EXPECT_NEAR(ssim(f.values, f.values), 1.0, 1e-12);
}

TEST(Metrics, PsnrAnalytic) {
  Tensor<double> t(Shape{1, 10, 10}), p(Shape{1, 10, 10});
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.1;  // mse 0.01
  EXPECT_NEAR(mse(p, t), 0.01, 1e-15);
  EXPECT_NEAR(psnr(p, t, 1.0), 20.0, 1e-12);
}

TEST(Metrics, DataRangeFallsBackForConstantTarget) {
  EXPECT_EQ(data_range(Tensor<double>(Shape{1, 3, 3}, 4.0)), 1.0);
  Tensor<double> t(Shape{1, 1, 2}, std::vector<double>{-1.0, 2.5});
  EXPECT_EQ(data_range(t), 3.5);
}

TEST(Metrics, PsnrStrictlyDecreasesWithMse) {
  const auto t = band_limited(16, 10).values;
  double prev = std::numeric_limits<double>::infinity();
  for (double e : {0.001, 0.01, 0.05, 0.2, 1.0}) {
    Tensor<double> p = t;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += (i % 2 ? e : -e);
    const double v = psnr(p, t, 2.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Metrics, SsimOfInvertedCheckerboardIsNegative) {
  Tensor<double> a(Shape{1, 32, 32}), b(Shape{1, 32, 32});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      a.at3(0, y, x) = double((x + y) % 2);
      b.at3(0, y, x) = 1.0 - a.at3(0, y, x);
    }
  EXPECT_LT(ssim(b, a), 0.0);
}

// Direct single-window evaluation of the SSIM formula for a field exactly 11x11.
TEST(Metrics, SsimMatchesDirectFormulaOnOneWindow) {
  std::mt19937_64 rng(11);
  const auto a = test::random_tensor({1, 11, 11}, rng, 0.0, 1.0);
  const auto b = test::random_tensor({1, 11, 11}, rng, 0.0, 1.0);
  double w[11], total = 0.0;
  for (int i = 0; i < 11; ++i) total += (w[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5));
  double mx = 0, my = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double g = w[y] * w[x] / (total * total);
      mx += g * a[y * 11 + x];
      my += g * b[y * 11 + x];
    }
  double vx = 0, vy = 0, cxy = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double g = w[y] * w[x] / (total * total);
      vx += g * (a[y * 11 + x] - mx) * (a[y * 11 + x] - mx);
      vy += g * (b[y * 11 + x] - my) * (b[y * 11 + x] - my);
      cxy += g * (a[y * 11 + x] - mx) * (b[y * 11 + x] - my);
    }
  const double L = data_range(b);
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  const double expect = (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  EXPECT_NEAR(ssim(a, b), expect, 1e-10);
}

TEST(Metrics, ShapeMismatchThrows) {
  EXPECT_THROW(mse(Tensor<double>(Shape{1, 2, 2}), Tensor<double>(Shape{1, 2, 3})), ShapeError);
}

class InterpMethods : public ::testing::TestWithParam<Interp> {};

TEST_P(InterpMethods, ConstantStaysConstant) {
  const auto f = sampled(9, 13, [](std::size_t, double, double) { return 2.5; });
  for (auto [ty, tx] : {std::pair{27, 40}, {5, 7}, {9, 13}, {16, 16}}) {
    const auto out = interpolate(f, ty, tx, GetParam());
    for (double v : out.values.data()) EXPECT_NEAR(v, 2.5, 1e-12);
  }
}

TEST_P(InterpMethods, SameExtentsIsIdentity) {
  const auto f = band_limited(17, 12);
  EXPECT_LT(test::max_abs_diff(interpolate(f, 17, 17, GetParam()).values, f.values), 1e-14);
}

INSTANTIATE_TEST_SUITE_P(All, InterpMethods, ::testing::Values(Interp::nearest, Interp::bilinear, Interp::bicubic),
                         [](const auto& info) { return std::string(interp_name(info.param)); });

TEST(Interp, BilinearReproducesAffineFields) {
  auto ramp = [](std::size_t, double y, double x) { return 0.7 * x - 1.3 * y + 0.25; };
  const auto lr = sampled(8, 8, ramp);
  for (auto [ty, tx] : {std::pair{23, 23}, {16, 30}, {8, 8}, {64, 51}, {5, 3}}) {
    const auto out = interpolate(lr, ty, tx, Interp::bilinear);
    const auto ref = sampled(ty, tx, ramp);
    EXPECT_LT(test::max_abs_diff(out.values, ref.values), 1e-12) << ty << "x" << tx;
  }
}

TEST(Interp, NearestPicksContainingCell) {
  GridField f(Tensor<double>(Shape{1, 1, 4}, std::vector<double>{0, 1, 2, 3}));
  const auto out = interpolate(f, 1, 8, Interp::nearest);
  EXPECT_EQ(out.values.to_vector(), (std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3}));
}

TEST(Interp, BicubicInterpolatesSmoothFieldsBetterThanBilinear) {
  auto f = [](std::size_t, double y, double x) { return std::sin(1.3 * x) * std::cos(0.9 * y); };
  const auto lr = sampled(16, 16, f);
  const auto ref = sampled(48, 48, f);
  // Interior only: bicubic clamps its taps at the border while bilinear extrapolates.
  auto interior_err = [&](Interp m) {
    const auto out = interpolate(lr, 48, 48, m);
    return mse(center_crop(out, 36, 36).values, center_crop(ref, 36, 36).values);
  };
  const double e_lin = interior_err(Interp::bilinear), e_cub = interior_err(Interp::bicubic);
  EXPECT_LT(e_cub, e_lin);
}

TEST(Interp, ParsesNames) {
  EXPECT_EQ(parse_interp("bicubic"), Interp::bicubic);
  EXPECT_THROW(parse_interp("lanczos"), Error);
  EXPECT_EQ(parse_degradation("bicubic"), Degradation::bicubic);
  EXPECT_THROW(parse_degradation("blur"), Error);
}

TEST(Sfb, RoundTripIsBitExact) {
  std::vector<GridField> recs;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 3; ++i) {
    auto t = test::random_tensor({2, 5, 7}, rng);
    for (double& v : t.data()) v = double(float(v));
    recs.emplace_back(t);
  }
  const auto path = std::filesystem::temp_directory_path() / "fsr_test_fields" / "roundtrip.sfb";
  write_sfb(path, recs);
  const auto back = read_sfb(path);
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back[i].values, recs[i].values);
  EXPECT_EQ(serialize_sfb(back), serialize_sfb(recs));
  std::filesystem::remove_all(path.parent_path());
}

TEST(Sfb, HeaderLayout) {
  const std::string bytes = serialize_sfb({GridField(Tensor<double>(Shape{1, 2, 3}, 1.0))});
  ASSERT_EQ(bytes.size(), 32u + 6u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "SFB1");
  EXPECT_EQ(std::uint8_t(bytes[4]), 1);   // count
  EXPECT_EQ(std::uint8_t(bytes[12]), 2);  // n_y
  EXPECT_EQ(std::uint8_t(bytes[16]), 3);  // n_x
  EXPECT_EQ(std::uint8_t(bytes[20]), 0);  // dtype f32
}

TEST(Sfb, TruncatedInputNamesByteOffset) {
  std::string bytes = serialize_sfb({GridField(Tensor<double>(Shape{1, 4, 4}, 1.0))});
  bytes.resize(bytes.size() - 3);
  try {
    parse_sfb(bytes, "t.sfb");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

TEST(Sfb, WrongMagic) {
  std::string bytes = serialize_sfb({GridField(Tensor<double>(Shape{1, 2, 2}))});
  bytes[0] = 'X';
  try {
    parse_sfb(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("not an SFB file"), std::string::npos);
  }
}

TEST(Sfb, TrailingBytesRejected) {
  std::string bytes = serialize_sfb({GridField(Tensor<double>(Shape{1, 2, 2}))});
  bytes += "xx";
  EXPECT_THROW(parse_sfb(bytes), ParseError);
}
