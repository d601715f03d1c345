#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fsr/autodiff.hpp"
#include "fsr/spectral.hpp"
#include "test_util.hpp"

using namespace fsr;
namespace sp = fsr::spectral;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// f(y, x) sampled at cell centers of an ny x nx grid over the unit period.
template <typename F>
Tensor<double> sample(std::size_t ny, std::size_t nx, F f) {
  Tensor<double> t(Shape{1, ny, nx});
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) t.at3(0, y, x) = f((double(y) + 0.5) / double(ny), (double(x) + 0.5) / double(nx));
  return t;
}

// Random trigonometric polynomial with |ky|, |kx| <= kmax, evaluated at cell centers.
struct TrigField {
  std::vector<std::tuple<int, int, double, double>> modes;
  TrigField(int kmax, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(-1.0, 1.0), phase(0.0, kTwoPi);
    for (int ky = -kmax; ky <= kmax; ++ky)
      for (int kx = 0; kx <= kmax; ++kx) modes.emplace_back(ky, kx, amp(rng), phase(rng));
  }
  Tensor<double> at(std::size_t ny, std::size_t nx) const {
    return sample(ny, nx, [&](double y, double x) {
      double v = 0.0;
      for (auto [ky, kx, a, p] : modes) v += a * std::cos(kTwoPi * (ky * y + kx * x) + p);
      return v;
    });
  }
};

double rel_l2(const Tensor<double>& a, const Tensor<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

double mean_square(const Tensor<double>& a) { return test::dot(a, a) / double(a.size()); }

}  // namespace

TEST(Fft, Parseval) {
  std::mt19937_64 rng(1);
  for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{8, 8}, {7, 5}, {16, 12}, {1, 9}}) {
    const auto f = test::random_tensor({ny, nx}, rng);
    std::vector<sp::Complex> spec(f.data().begin(), f.data().end());
    sp::fft2(spec, ny, nx, false);
    double lhs = test::dot(f, f), rhs = 0.0;
    for (auto c : spec) rhs += std::norm(c);
    rhs /= double(ny * nx);
    EXPECT_NEAR(lhs, rhs, 1e-10 * lhs);
  }
}

TEST(Fft, InverseRoundTrip) {
  std::mt19937_64 rng(2);
  const auto f = test::random_tensor({6, 10}, rng);
  std::vector<sp::Complex> spec(f.data().begin(), f.data().end());
  sp::fft2(spec, 6, 10, false);
  sp::fft2(spec, 6, 10, true);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(spec[i].real() / 60.0, f[i], 1e-14);
}

TEST(SpectralResize, ConstantStaysConstant) {
  const auto out = sp::resize(Tensor<double>({1, 4, 4}, 3.25), 8, 8);
  EXPECT_EQ(out.shape(), (Shape{1, 8, 8}));
  for (double v : out.data()) EXPECT_NEAR(v, 3.25, 1e-14);
}

TEST(SpectralResize, PureModeEnlargesToAnalyticSamples) {
  auto mode = [](double, double x) { return std::cos(kTwoPi * x); };
  const auto out = sp::resize(sample(8, 8, mode), 16, 16);
  EXPECT_LT(test::max_abs_diff(out, sample(16, 16, mode)), 1e-10);
}

TEST(SpectralResize, OddAndMixedExtentsMatchAnalyticSamples) {
  auto mode = [](double y, double x) { return std::cos(kTwoPi * (2 * x + y) + 0.3) - 0.5 * std::sin(kTwoPi * (x - 2 * y)); };
  EXPECT_LT(test::max_abs_diff(sp::resize(sample(7, 9, mode), 12, 10), sample(12, 10, mode)), 1e-10);
  EXPECT_LT(test::max_abs_diff(sp::resize(sample(12, 10, mode), 7, 5), sample(7, 5, mode)), 1e-10);
  EXPECT_LT(test::max_abs_diff(sp::resize(sample(6, 11, mode), 23, 8), sample(23, 8, mode)), 1e-10);
}

TEST(SpectralResize, BandLimitedDownUpRoundTrip) {
  std::mt19937_64 rng(3);
  const auto f = TrigField(3, rng).at(16, 16);
  const auto back = sp::resize(sp::resize(f, 8, 8), 16, 16);
  EXPECT_LT(rel_l2(back, f), 1e-10);
}

TEST(SpectralResize, UpThenDownIsIdentity) {
  std::mt19937_64 rng(4);
  for (auto [ny, nx, ty, tx] : {std::array<std::size_t, 4>{6, 7, 11, 16}, {8, 8, 16, 16}, {5, 4, 5, 9}, {9, 10, 12, 13}}) {
    const auto f = test::random_tensor({2, ny, nx}, rng);
    const auto back = sp::resize(sp::resize(f, ty, tx), ny, nx);
    EXPECT_LT(test::max_abs_diff(back, f), 1e-10) << ny << "x" << nx << " via " << ty << "x" << tx;
  }
}

TEST(SpectralResize, SameExtentsIsExactCopy) {
  std::mt19937_64 rng(5);
  const auto f = test::random_tensor({1, 9, 9}, rng);
  EXPECT_EQ(sp::resize(f, 9, 9), f);
}

TEST(SpectralResize, Linear) {
  std::mt19937_64 rng(6);
  const auto f = test::random_tensor({1, 10, 7}, rng), g = test::random_tensor({1, 10, 7}, rng);
  Tensor<double> combo(f.shape());
  for (std::size_t i = 0; i < f.size(); ++i) combo[i] = 2.5 * f[i] - 0.75 * g[i];
  const auto rf = sp::resize(f, 13, 4), rg = sp::resize(g, 13, 4), rc = sp::resize(combo, 13, 4);
  for (std::size_t i = 0; i < rc.size(); ++i) EXPECT_NEAR(rc[i], 2.5 * rf[i] - 0.75 * rg[i], 1e-10);
}

TEST(SpectralResize, AdjointIdentity) {
  std::mt19937_64 rng(7);
  for (auto [ny, nx, ty, tx] : {std::array<std::size_t, 4>{8, 8, 16, 16}, {16, 16, 8, 8}, {7, 10, 12, 6}, {6, 5, 3, 9}, {4, 4, 5, 5}}) {
    const auto x = test::random_tensor({1, ny, nx}, rng);
    const auto y = test::random_tensor({1, ty, tx}, rng);
    const double lhs = test::dot(sp::resize(x, ty, tx), y);
    const double rhs = test::dot(x, sp::resize_adjoint(y, ny, nx));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(SpectralResize, AutodiffBackwardIsAdjoint) {
  std::mt19937_64 rng(8);
  const auto x = test::random_tensor({1, 1, 6, 9}, rng);
  const auto y = test::random_tensor({1, 1, 11, 4}, rng);
  Tape<double> tape;
  auto xv = tape.variable(x);
  tape.backward(sum(mul(spectral_resize(xv, 11, 4), tape.constant(y))));
  const auto expected = sp::resize_adjoint(y, 6, 9);
  EXPECT_LT(test::max_abs_diff(xv.grad(), expected), 1e-12);
}

TEST(SpectralResize, RejectsZeroExtent) { EXPECT_THROW(sp::resize(Tensor<double>({1, 4, 4}), 0, 4), Error); }

TEST(ZeroInterleave, Definition) {
  const Tensor<double> h({1, 1, 2}, {3.0, -4.0});
  const auto out = sp::zero_interleave(h, 2);
  EXPECT_EQ(out.shape(), (Shape{1, 2, 4}));
  EXPECT_EQ(out.to_vector(), (std::vector<double>{3, 0, -4, 0, 0, 0, 0, 0}));
}

TEST(ZeroInterleave, IdentityAndEnergy) {
  std::mt19937_64 rng(9);
  const auto h = test::random_tensor({2, 3, 5}, rng);
  EXPECT_EQ(sp::zero_interleave(h, 1), h);
  const auto up = sp::zero_interleave(h, 3);
  EXPECT_EQ(test::dot(up, up), test::dot(h, h));
  EXPECT_THROW(sp::zero_interleave(h, 0), Error);
}

TEST(SincFilter, UnitDcSymmetricSeparable) {
  const auto f = sp::SincFilter::lowpass(0.25);
  ASSERT_EQ(f.taps().size(), 33u);
  double total = 0.0;
  for (double v : f.taps()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-15);
  for (std::size_t i = 0; i < 33; ++i) EXPECT_EQ(f.taps()[i], f.taps()[32 - i]);
  const auto k2 = f.kernel2d();
  double total2 = 0.0;
  for (std::size_t i = 0; i < 33; ++i)
    for (std::size_t j = 0; j < 33; ++j) {
      EXPECT_EQ(k2[i * 33 + j], f.taps()[i] * f.taps()[j]);
      total2 += k2[i * 33 + j];
    }
  EXPECT_NEAR(total2, 1.0, 1e-14);
}

TEST(SincFilter, InterpolatorPhasesSumToOne) {
  for (std::size_t n : {2u, 3u, 4u}) {
    const auto f = sp::SincFilter::interpolator(n);
    const long r = long(f.radius());
    for (long phase = 0; phase < long(n); ++phase) {
      double s = 0.0;
      for (long i = -r; i <= r; ++i)
        if (((i % long(n)) + long(n)) % long(n) == phase) s += f.taps()[std::size_t(i + r)];
      EXPECT_NEAR(s, 1.0, 1e-14);
    }
  }
}

TEST(AntialiasDownsample, ConstantPreserved) {
  const auto out = sp::antialias_downsample(Tensor<double>({1, 12, 10}, -1.5), 1.0, 0.5, 2);
  EXPECT_EQ(out.shape(), (Shape{1, 6, 5}));
  for (double v : out.data()) EXPECT_NEAR(v, -1.5, 1e-14);
}

TEST(AntialiasDownsample, OddExtentKeepsCeil) {
  EXPECT_EQ(sp::antialias_downsample(Tensor<double>({1, 9, 7}), 1.0, 0.5, 2).shape(), (Shape{1, 5, 4}));
}

TEST(AntialiasDownsample, PassbandModeSurvives) {
  // 2 cycles over 32 samples = 0.0625 cycles/sample, well inside the 0.25 cutoff.
  auto mode = [](double y, double x) { return std::cos(kTwoPi * (2 * x + y)); };
  const auto out = sp::antialias_downsample(sample(32, 32, mode), 1.0, 0.5, 2);
  // Decimation keeps samples 0, 2, 4, ...: the mode at the even cell centers of the fine grid.
  Tensor<double> expected(Shape{1, 16, 16});
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) expected.at3(0, y, x) = mode((2.0 * y + 0.5) / 32.0, (2.0 * x + 0.5) / 32.0);
  EXPECT_LT(test::max_abs_diff(out, expected), 0.01);
}

TEST(AntialiasDownsample, StopbandSuppressedBy40dB) {
  for (int k : {13, 14, 15}) {
    // k / 32 >= 0.406 cycles/sample, far past the 0.25 cutoff.
    const auto in = sample(32, 32, [k](double y, double x) { return std::cos(kTwoPi * k * x + 0.4) + std::cos(kTwoPi * k * y - 1.1); });
    const auto out = sp::antialias_downsample(in, 1.0, 0.5, 2);
    const double db = 10.0 * std::log10(mean_square(in) / std::max(mean_square(out), 1e-300));
    EXPECT_GE(db, 40.0) << "k=" << k;
  }
}

TEST(AntialiasDownsample, RejectsAliasingBandwidths) {
  EXPECT_THROW(sp::antialias_downsample(Tensor<double>({1, 8, 8}), 0.5, 1.0, 2), Error);
}

TEST(InterpUpsample, ConstantPreserved) {
  const auto out = sp::interp_upsample(Tensor<double>({1, 5, 6}, 0.875), 2);
  EXPECT_EQ(out.shape(), (Shape{1, 10, 12}));
  for (double v : out.data()) EXPECT_NEAR(v, 0.875, 1e-14);
}

TEST(InterpUpsample, DownThenUpRecoversBandLimitedField) {
  std::mt19937_64 rng(10);
  const auto f = TrigField(2, rng).at(32, 32);
  const auto back = sp::interp_upsample(sp::antialias_downsample(f, 1.0, 0.5, 2), 2);
  EXPECT_LT(rel_l2(back, f), 1e-3);
}

TEST(InterpUpsample, ImpulseReplicatesKernel) {
  Tensor<double> h(Shape{1, 20, 20});
  h.at3(0, 0, 0) = 1.0;
  const auto out = sp::interp_upsample(h, 2);
  const auto f = sp::SincFilter::interpolator(2);
  const long r = long(f.radius());
  for (long i = -r; i <= r; ++i)
    for (long j = -r; j <= r; ++j) {
      const std::size_t y = std::size_t((i + 40) % 40), x = std::size_t((j + 40) % 40);
      EXPECT_NEAR(out.at3(0, y, x), f.taps()[std::size_t(i + r)] * f.taps()[std::size_t(j + r)], 1e-15);
    }
}

TEST(Hierarchy, DescendAscendAdjoints) {
  std::mt19937_64 rng(11);
  for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{12, 12}, {9, 14}, {5, 3}}) {
    const std::size_t my = (ny + 1) / 2, mx = (nx + 1) / 2;
    const auto x = test::random_tensor({2, ny, nx}, rng);
    const auto y = test::random_tensor({2, my, mx}, rng);
    EXPECT_NEAR(test::dot(sp::antialias_downsample(x, 1.0, 0.5, 2), y),
                test::dot(x, sp::antialias_downsample_adjoint(y, 2, ny, nx)), 1e-8);
    EXPECT_NEAR(test::dot(sp::interp_upsample(y, 2, ny, nx), x), test::dot(y, sp::interp_upsample_adjoint(x, 2, my, mx)),
                1e-8);
  }
}

TEST(RadialSpectrum, WhiteNoiseIsFlat) {
  constexpr std::size_t n = 32, seeds = 50;
  std::vector<std::vector<double>> runs;
  for (std::size_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::normal_distribution<double> g;
    std::vector<double> f(n * n);
    for (double& v : f) v = g(rng);
    runs.push_back(sp::radial_power_spectrum(f, n).power);
  }
  const std::size_t bins = runs[0].size();
  // White unit-variance noise: |X / n^2|^2 is exponential with mean mu = 1 / n^2 for complex
  // bins and mu * chi2(1) for the self-conjugate ones; X(-k) = conj X(k) duplicates a draw.
  const double mu = 1.0 / double(n * n);
  std::vector<double> count(bins, 0.0), var_sum(bins, 0.0);
  auto sgn = [](std::size_t k) { return k <= n / 2 ? double(k) : double(k) - double(n); };
  for (std::size_t ky = 0; ky < n; ++ky)
    for (std::size_t kx = 0; kx < n; ++kx) {
      const std::size_t b = std::size_t(std::lround(std::hypot(sgn(ky), sgn(kx))));
      count[b] += 1.0;
      const std::size_t cy = (n - ky) % n, cx = (n - kx) % n;
      if (cy == ky && cx == kx) {
        var_sum[b] += 2.0 * mu * mu;
      } else if (ky * n + kx < cy * n + cx) {
        var_sum[b] += 4.0 * mu * mu;  // two identical entries of one exponential draw
      }
    }
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0.0) continue;
    double mean = 0.0;
    for (const auto& r : runs) mean += r[b];
    mean /= seeds;
    const double sigma = std::sqrt(var_sum[b] / (count[b] * count[b]) / seeds);
    // ~24 bins are tested at once, so the per-bin bound is wide enough for the family.
    EXPECT_LT(std::abs(mean - mu), 4.5 * sigma) << "bin " << b;
  }
}

TEST(RadialSpectrum, SingleModeConcentratesInItsBin) {
  constexpr std::size_t n = 32;
  const auto f = sample(n, n, [](double, double x) { return std::sin(kTwoPi * 4 * x); });
  const auto spec = sp::radial_power_spectrum(f.data(), n);
  double total = 0.0;
  for (double p : spec.power) {
    EXPECT_GE(p, 0.0);
    total += p;
  }
  EXPECT_GT(spec.power[4] / total, 0.99);
  for (std::size_t b = 1; b < spec.k.size(); ++b) EXPECT_GT(spec.k[b], spec.k[b - 1]);
}

TEST(RadialSpectrum, ConstantIsAllDc) {
  std::vector<double> f(16 * 16, 2.0);
  const auto spec = sp::radial_power_spectrum(f, 16);
  EXPECT_NEAR(spec.power[0], 4.0, 1e-12);
  for (std::size_t b = 1; b < spec.power.size(); ++b) EXPECT_LT(spec.power[b], 1e-28);
}

TEST(RadialSpectrum, CsvHeader) {
  std::vector<double> f(8 * 8, 1.0);
  std::ostringstream out;
  sp::write_spectrum_csv(out, sp::radial_power_spectrum(f, 8));
  EXPECT_EQ(out.str().substr(0, 8), "k,power\n");
}
