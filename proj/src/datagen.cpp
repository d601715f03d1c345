#include "fsr/datagen.hpp"

#include <cmath>
#include <random>

#include "fsr/rng.hpp"
#include "fsr/spectral.hpp"

namespace fsr {

namespace {

using spectral::Complex;

double signed_freq(std::size_t k, std::size_t n) { return k <= n / 2 ? double(k) : double(k) - double(n); }

// FFT of n x n real white noise; Hermitian, so any real radial filter keeps the field real.
std::vector<Complex> noise_spectrum(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Complex> c(n * n);
  for (auto& v : c) v = g(rng);
  spectral::fft2(c, n, n, false);
  return c;
}

std::vector<double> real_part(std::vector<Complex>& c, std::size_t n, double norm) {
  spectral::fft2(c, n, n, true);
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real() * norm;
  return out;
}

class VorticitySolver {
 public:
  VorticitySolver(const TurbSpec& spec) : n_(spec.n), spec_(spec), kx_(n_ * n_), ky_(n_ * n_), k2_(n_ * n_), keep_(n_ * n_) {
    for (std::size_t y = 0; y < n_; ++y)
      for (std::size_t x = 0; x < n_; ++x) {
        const std::size_t i = y * n_ + x;
        kx_[i] = signed_freq(x, n_);
        ky_[i] = signed_freq(y, n_);
        k2_[i] = kx_[i] * kx_[i] + ky_[i] * ky_[i];
        // 2/3 rule; the unpaired Nyquist row and column are dropped as well.
        keep_[i] = 3.0 * std::abs(kx_[i]) < double(n_) && 3.0 * std::abs(ky_[i]) < double(n_);
      }
  }

  std::size_t size() const { return n_ * n_; }

  std::vector<Complex> forward(const std::vector<double>& f) const {
    std::vector<Complex> c(f.begin(), f.end());
    spectral::fft2(c, n_, n_, false);
    return c;
  }

  std::vector<double> inverse(std::vector<Complex> c) const {
    spectral::fft2(c, n_, n_, true);
    std::vector<double> out(c.size());
    const double norm = 1.0 / double(size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real() * norm;
    return out;
  }

  // Velocity from vorticity: psi = w / |k|^2, u = d psi / dy, v = -d psi / dx.
  void velocity(const std::vector<Complex>& w, std::vector<double>& u, std::vector<double>& v) const {
    std::vector<Complex> uh(size()), vh(size());
    const Complex I(0.0, 1.0);
    for (std::size_t i = 0; i < size(); ++i) {
      if (k2_[i] == 0.0) continue;
      const Complex psi = w[i] / k2_[i];
      uh[i] = I * ky_[i] * psi;
      vh[i] = -I * kx_[i] * psi;
    }
    u = inverse(std::move(uh));
    v = inverse(std::move(vh));
  }

  // -(u . grad w), dealiased, with the mean mode pinned to zero.
  std::vector<Complex> nonlinear(const std::vector<Complex>& w) const {
    std::vector<double> u, v;
    velocity(w, u, v);
    std::vector<Complex> wxh(size()), wyh(size());
    const Complex I(0.0, 1.0);
    for (std::size_t i = 0; i < size(); ++i) {
      wxh[i] = I * kx_[i] * w[i];
      wyh[i] = I * ky_[i] * w[i];
    }
    const auto wx = inverse(std::move(wxh)), wy = inverse(std::move(wyh));
    std::vector<double> adv(size());
    for (std::size_t i = 0; i < size(); ++i) adv[i] = -(u[i] * wx[i] + v[i] * wy[i]);
    auto out = forward(adv);
    for (std::size_t i = 0; i < size(); ++i)
      if (!keep_[i] || k2_[i] == 0.0) out[i] = 0.0;
    return out;
  }

  // Integrating-factor SSP-RK3; the viscous term is integrated exactly.
  void step(std::vector<Complex>& w) const {
    const double dt = spec_.dt;
    std::vector<double> e1(size()), eh(size()), ehi(size());
    for (std::size_t i = 0; i < size(); ++i) {
      const double L = -spec_.nu * k2_[i];
      e1[i] = std::exp(L * dt);
      eh[i] = std::exp(L * dt * 0.5);
      ehi[i] = std::exp(-L * dt * 0.5);
    }
    const auto n0 = nonlinear(w);
    std::vector<Complex> w1(size()), w2(size());
    for (std::size_t i = 0; i < size(); ++i) w1[i] = e1[i] * (w[i] + dt * n0[i]);
    const auto n1 = nonlinear(w1);
    for (std::size_t i = 0; i < size(); ++i) w2[i] = 0.75 * eh[i] * w[i] + 0.25 * ehi[i] * (w1[i] + dt * n1[i]);
    const auto n2 = nonlinear(w2);
    for (std::size_t i = 0; i < size(); ++i) w[i] = e1[i] * w[i] / 3.0 + 2.0 / 3.0 * eh[i] * (w2[i] + dt * n2[i]);
  }

  double max_speed(const std::vector<Complex>& w) const {
    std::vector<double> u, v;
    velocity(w, u, v);
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m = std::max(m, std::hypot(u[i], v[i]));
    return m;
  }

  void record(const std::vector<Complex>& w, TurbDiagnostics& d) const {
    std::vector<double> u, v;
    velocity(w, u, v);
    const auto omega = inverse(w);
    double e = 0.0, z = 0.0, m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      e += u[i] * u[i] + v[i] * v[i];
      z += omega[i] * omega[i];
      m += omega[i];
    }
    d.energy.push_back(0.5 * e / double(size()));
    d.enstrophy.push_back(0.5 * z / double(size()));
    d.mean_vorticity.push_back(m / double(size()));
    // Divergence from the physical-space velocity, so the check sees round-off from both transforms.
    const auto uh = forward(u), vh = forward(v);
    double div2 = 0.0;
    for (std::size_t i = 0; i < size(); ++i) div2 += std::norm(Complex(0.0, 1.0) * (kx_[i] * uh[i] + ky_[i] * vh[i]));
    d.max_divergence = std::max(d.max_divergence, std::sqrt(div2) / double(size()));
  }

  const std::vector<double>& k2() const { return k2_; }
  const std::vector<char>& keep() const { return keep_; }

 private:
  std::size_t n_;
  TurbSpec spec_;
  std::vector<double> kx_, ky_, k2_;
  std::vector<char> keep_;
};

void validate(const TurbSpec& spec) {
  if (spec.n < 8 || spec.n > 256 || (spec.n & (spec.n - 1)) != 0) {
    throw Error("turbulence: n must be a power of two in [8, 256], got " + std::to_string(spec.n));
  }
  if (!(spec.nu >= 0.0) || !(spec.dt > 0.0)) throw Error("turbulence: need nu >= 0 and dt > 0");
}

}  // namespace

GridField generate_grf(const GrfSpec& spec) {
  const std::size_t n = spec.n;
  if (n < 4) throw Error("grf: n must be at least 4, got " + std::to_string(n));
  if (!(spec.gamma >= 0.0)) throw Error("grf: gamma must be >= 0");
  if (!(spec.k_min >= 0.0) || !(spec.k_max >= spec.k_min)) throw Error("grf: need 0 <= k_min <= k_max");
  if (spec.k_max > double(n / 2) - 1.0) {
    throw Error("grf: k_max " + std::to_string(spec.k_max) + " reaches the Nyquist band of n = " + std::to_string(n) +
                " (limit " + std::to_string(n / 2 - 1) + ")");
  }
  if (spec.channels == 0) throw Error("grf: channels must be positive");
  auto rng = derived_rng({spec.seed});
  Tensor<double> values(Shape{spec.channels, n, n});
  for (std::size_t c = 0; c < spec.channels; ++c) {
    auto coef = noise_spectrum(n, rng);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double k = std::hypot(signed_freq(y, n), signed_freq(x, n));
        const bool in_band = k >= spec.k_min && k <= spec.k_max && k > 0.0;
        coef[y * n + x] *= in_band ? std::pow(k, -0.5 * spec.gamma) : 0.0;
      }
    auto plane = real_part(coef, n, 1.0);
    double mean = 0.0;
    for (double v : plane) mean += v;
    mean /= double(plane.size());
    double var = 0.0;
    for (double v : plane) var += (v - mean) * (v - mean);
    var /= double(plane.size());
    if (!(var > 0.0)) throw Error("grf: empty band [" + std::to_string(spec.k_min) + ", " + std::to_string(spec.k_max) + "]");
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < plane.size(); ++i) values[c * n * n + i] = (plane[i] - mean) * inv;
  }
  return GridField(std::move(values));
}

std::vector<double> initial_vorticity(const TurbSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n;
  VorticitySolver solver(spec);
  auto rng = derived_rng({spec.seed, 0x7475726275ULL});
  auto w = noise_spectrum(n, rng);
  const double width = std::max(1.0, 0.5 * spec.k0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double k = std::sqrt(solver.k2()[i]);
    w[i] *= (solver.keep()[i] && k > 0.0) ? std::exp(-(k - spec.k0) * (k - spec.k0) / (2.0 * width * width)) : 0.0;
  }
  std::vector<double> u, v;
  solver.velocity(w, u, v);
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) e += u[i] * u[i] + v[i] * v[i];
  const double rms = std::sqrt(e / double(u.size()));
  auto omega = solver.inverse(w);
  if (rms > 0.0)
    for (double& x : omega) x /= rms;
  return omega;
}

std::vector<GridField> simulate_turbulence(const TurbSpec& spec, std::size_t snapshots, TurbDiagnostics* diagnostics) {
  return simulate_turbulence(spec, initial_vorticity(spec), snapshots, diagnostics);
}

std::vector<GridField> simulate_turbulence(const TurbSpec& spec, std::vector<double> vorticity, std::size_t snapshots,
                                           TurbDiagnostics* diagnostics) {
  validate(spec);
  const std::size_t n = spec.n;
  if (vorticity.size() != n * n) throw ShapeError("turbulence: initial vorticity must have n * n values");
  if (snapshots == 0 || snapshots > spec.steps) {
    throw Error("turbulence: need 1 <= snapshots <= steps, got " + std::to_string(snapshots) + " for " +
                std::to_string(spec.steps) + " steps");
  }
  VorticitySolver solver(spec);
  auto w = solver.forward(vorticity);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!solver.keep()[i] || solver.k2()[i] == 0.0) w[i] = 0.0;
  if (diagnostics) solver.record(w, *diagnostics);

  const std::size_t stride = spec.steps / snapshots;
  std::vector<GridField> out;
  for (std::size_t s = 1; s <= spec.steps && out.size() < snapshots; ++s) {
    const double cfl = spec.dt * double(n) * solver.max_speed(w);
    if (!(cfl < 0.5)) {
      throw Error("turbulence: CFL violated at step " + std::to_string(s) + " (dt * n * u_max = " + std::to_string(cfl) +
                  ", limit 0.5)");
    }
    solver.step(w);
    if (diagnostics) solver.record(w, *diagnostics);
    if (s % stride == 0) {
      const auto omega = solver.inverse(w);
      out.emplace_back(Tensor<double>(Shape{1, n, n}, omega));
    }
  }
  return out;
}

DatasetSpec dataset_spec_from_config(const Config& config) {
  config.check_keys("data", {"source", "seed"});
  config.check_keys("grf", {"n", "gamma", "k_min", "k_max", "channels"});
  config.check_keys("turb", {"n", "nu", "dt", "steps", "k0"});
  config.check_keys("splits", {"train", "valid", "test"});
  DatasetSpec spec;
  const std::string source = config.string("data", "source", "grf");
  if (source == "grf") {
    spec.source = DataSource::grf;
  } else if (source == "turb") {
    spec.source = DataSource::turb;
  } else {
    throw ConfigError("[data] source: expected \"grf\" or \"turb\", got '" + source + "'");
  }
  spec.seed = config.count("data", "seed", 0);
  spec.grf.n = config.count("grf", "n", spec.grf.n);
  spec.grf.gamma = config.number("grf", "gamma", spec.grf.gamma);
  spec.grf.k_min = config.number("grf", "k_min", spec.grf.k_min);
  spec.grf.k_max = config.number("grf", "k_max", spec.grf.k_max);
  spec.grf.channels = config.count("grf", "channels", spec.grf.channels);
  spec.turb.n = config.count("turb", "n", spec.turb.n);
  spec.turb.nu = config.number("turb", "nu", spec.turb.nu);
  spec.turb.dt = config.number("turb", "dt", spec.turb.dt);
  spec.turb.steps = config.count("turb", "steps", spec.turb.steps);
  spec.turb.k0 = config.number("turb", "k0", spec.turb.k0);
  spec.train = config.count("splits", "train", spec.train);
  spec.valid = config.count("splits", "valid", spec.valid);
  spec.test = config.count("splits", "test", spec.test);
  return spec;
}

std::vector<GridField> generate_split(const DatasetSpec& spec, std::size_t split, std::size_t count) {
  if (count == 0) return {};
  if (spec.source == DataSource::turb) {
    TurbSpec t = spec.turb;
    t.seed = derived_rng({spec.seed, split, 0x54ULL})();
    return simulate_turbulence(t, count);
  }
  std::vector<GridField> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GrfSpec g = spec.grf;
    g.seed = derived_rng({spec.seed, split, i})();
    out.push_back(generate_grf(g));
  }
  return out;
}

DatasetSummary build_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  DatasetSummary summary;
  const char* names[3] = {"train.sfb", "valid.sfb", "test.sfb"};
  const std::size_t counts[3] = {spec.train, spec.valid, spec.test};
  for (std::size_t s = 0; s < 3; ++s) {
    const auto path = dir / names[s];
    write_sfb(path, generate_split(spec, s, counts[s]));
    summary.files.push_back(path);
    summary.counts.push_back(counts[s]);
  }
  return summary;
}

}  // namespace fsr
