#include "fsr/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <tuple>

namespace fsr::spectral {

namespace {

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t ny, std::size_t nx, bool inverse) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(ny, nx, inverse);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<Complex> scratch(ny * nx);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_2d(int(ny), int(nx), buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("fft: planning failed for " + std::to_string(ny) + "x" + std::to_string(nx));
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

struct Term {
  std::size_t src;
  Complex weight;
};

long signed_bin(std::size_t k, std::size_t n) { return 2 * k <= n ? long(k) : long(k) - long(n); }
std::size_t wrap_bin(long s, std::size_t n) { return s >= 0 ? std::size_t(s) : std::size_t(s + long(n)); }

// Moving from n to m cells shifts the first cell center from 0.5/n to 0.5/m of the period, so a
// mode of signed frequency s picks up the phase exp(i pi s (1/m - 1/n)).
Complex center_phase(long s, std::size_t n, std::size_t m) {
  return std::polar(1.0, std::numbers::pi * double(s) * (1.0 / double(m) - 1.0 / double(n)));
}

// For each destination bin of a length-m axis, the source bins of the length-n axis and weights.
std::vector<std::vector<Term>> resize_map(std::size_t n, std::size_t m) {
  std::vector<std::vector<Term>> map(m);
  if (m >= n) {
    for (std::size_t k = 0; k < n; ++k) {
      const long s = signed_bin(k, n);
      if (n % 2 == 0 && 2 * s == long(n) && m != n) {
        map[wrap_bin(s, m)].push_back({k, 0.5 * center_phase(s, n, m)});
        map[wrap_bin(-s, m)].push_back({k, 0.5 * center_phase(-s, n, m)});
      } else {
        map[wrap_bin(s, m)].push_back({k, center_phase(s, n, m)});
      }
    }
  } else {
    for (std::size_t k = 0; k < m; ++k) {
      const long s = signed_bin(k, m);
      if (m % 2 == 0 && 2 * s == long(m)) {
        map[k].push_back({wrap_bin(s, n), center_phase(s, n, m)});
        map[k].push_back({wrap_bin(-s, n), center_phase(-s, n, m)});
      } else {
        map[k].push_back({wrap_bin(s, n), center_phase(s, n, m)});
      }
    }
  }
  return map;
}

// Conjugate transpose of resize_map(n, m): for each bin of the length-n axis, its m-axis sources.
std::vector<std::vector<Term>> resize_map_adjoint(std::size_t n, std::size_t m) {
  const auto forward = resize_map(n, m);
  std::vector<std::vector<Term>> map(n);
  for (std::size_t dst = 0; dst < m; ++dst)
    for (const Term& t : forward[dst]) map[t.src].push_back({dst, std::conj(t.weight)});
  return map;
}

std::vector<double> apply_spectral_map(std::span<const double> plane, std::size_t ny, std::size_t nx, std::size_t ty,
                                       std::size_t tx, const std::vector<std::vector<Term>>& map_y,
                                       const std::vector<std::vector<Term>>& map_x, double norm) {
  std::vector<Complex> spec(plane.begin(), plane.end());
  fft2(spec, ny, nx, false);
  std::vector<Complex> out(ty * tx);
  for (std::size_t ky = 0; ky < ty; ++ky) {
    for (const Term& wy : map_y[ky]) {
      const Complex* row = spec.data() + wy.src * nx;
      Complex* dst = out.data() + ky * tx;
      for (std::size_t kx = 0; kx < tx; ++kx) {
        for (const Term& wx : map_x[kx]) dst[kx] += (wy.weight * wx.weight) * row[wx.src];
      }
    }
  }
  fft2(out, ty, tx, true);
  std::vector<double> result(ty * tx);
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = out[i].real() * norm;
  return result;
}

void require_extents(const char* op, std::size_t ny, std::size_t nx) {
  if (ny == 0 || nx == 0) {
    throw Error(std::string(op) + ": extents must be positive, got " + std::to_string(ny) + "x" + std::to_string(nx));
  }
}

template <typename T, typename F>
Tensor<T> per_plane(const Tensor<T>& field, std::size_t ty, std::size_t tx, F f) {
  const std::size_t planes = plane_count(field);
  const std::size_t ny = field.dim(field.rank() - 2), nx = field.dim(field.rank() - 1);
  Tensor<T> out(with_plane(field.shape(), ty, tx));
  std::vector<double> buf(ny * nx);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = field.ptr() + p * ny * nx;
    std::copy(src, src + ny * nx, buf.begin());
    const std::vector<double> res = f(std::span<const double>(buf));
    std::copy(res.begin(), res.end(), out.ptr() + p * ty * tx);
  }
  return out;
}

double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

// Kaiser-windowed sinc(sinc_scale * i) for |i| <= taps / 2.
std::vector<double> kaiser_sinc(std::size_t taps, double beta, double sinc_scale) {
  if (taps % 2 == 0 || taps == 0) throw Error("sinc filter: tap count must be odd, got " + std::to_string(taps));
  const long r = long(taps / 2);
  std::vector<double> h(taps);
  const double denom = bessel_i0(beta);
  for (long i = -r; i <= r; ++i) {
    const double u = r == 0 ? 0.0 : double(i) / double(r);
    const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / denom;
    const double arg = sinc_scale * double(i);
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    h[std::size_t(i + r)] = sinc * window;
  }
  return h;
}

// Per-axis circular convolution index table: for output i and tap j, source (i + j - r) mod n.
std::vector<std::size_t> circular_index(std::size_t n, std::size_t taps) {
  const long r = long(taps / 2);
  std::vector<std::size_t> idx(n * taps);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < taps; ++j) {
      long s = (long(i) + long(j) - r) % long(n);
      if (s < 0) s += long(n);
      idx[i * taps + j] = std::size_t(s);
    }
  }
  return idx;
}

void filter_plane(const double* in, double* out, std::size_t ny, std::size_t nx, std::span<const double> taps,
                  const std::vector<std::size_t>& iy, const std::vector<std::size_t>& ix, std::vector<double>& tmp) {
  const std::size_t k = taps.size();
  tmp.assign(ny * nx, 0.0);
  for (std::size_t y = 0; y < ny; ++y) {
    const double* row = in + y * nx;
    double* dst = tmp.data() + y * nx;
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t* src = ix.data() + x * k;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += taps[j] * row[src[j]];
      dst[x] = acc;
    }
  }
  for (std::size_t y = 0; y < ny; ++y) {
    double* dst = out + y * nx;
    std::fill(dst, dst + nx, 0.0);
    const std::size_t* src = iy.data() + y * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = taps[j];
      const double* row = tmp.data() + src[j] * nx;
      for (std::size_t x = 0; x < nx; ++x) dst[x] += w * row[x];
    }
  }
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

void fft2(std::vector<Complex>& data, std::size_t ny, std::size_t nx, bool inverse) {
  require_extents("fft2", ny, nx);
  if (data.size() != ny * nx) {
    throw ShapeError("fft2: " + std::to_string(data.size()) + " values for " + std::to_string(ny) + "x" +
                     std::to_string(nx));
  }
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_cache().get(ny, nx, inverse), buf, buf);
}

std::vector<double> resize_plane(std::span<const double> plane, std::size_t ny, std::size_t nx, std::size_t ty,
                                 std::size_t tx) {
  require_extents("spectral_resize", ty, tx);
  require_extents("spectral_resize", ny, nx);
  if (plane.size() != ny * nx) throw ShapeError("spectral_resize: plane size does not match extents");
  if (ny == ty && nx == tx) return {plane.begin(), plane.end()};
  return apply_spectral_map(plane, ny, nx, ty, tx, resize_map(ny, ty), resize_map(nx, tx), 1.0 / double(ny * nx));
}

std::vector<double> resize_plane_adjoint(std::span<const double> plane, std::size_t ty, std::size_t tx,
                                         std::size_t ny, std::size_t nx) {
  require_extents("spectral_resize", ty, tx);
  require_extents("spectral_resize", ny, nx);
  if (plane.size() != ty * tx) throw ShapeError("spectral_resize adjoint: plane size does not match extents");
  if (ny == ty && nx == tx) return {plane.begin(), plane.end()};
  return apply_spectral_map(plane, ty, tx, ny, nx, resize_map_adjoint(ny, ty), resize_map_adjoint(nx, tx),
                            1.0 / double(ny * nx));
}

template <typename T>
Tensor<T> resize(const Tensor<T>& field, std::size_t ty, std::size_t tx) {
  require_extents("spectral_resize", ty, tx);
  const std::size_t ny = field.dim(field.rank() - 2), nx = field.dim(field.rank() - 1);
  if (ny == ty && nx == tx) return field;
  return per_plane(field, ty, tx, [&](std::span<const double> p) { return resize_plane(p, ny, nx, ty, tx); });
}

template <typename T>
Tensor<T> resize_adjoint(const Tensor<T>& grad, std::size_t ny, std::size_t nx) {
  const std::size_t ty = grad.dim(grad.rank() - 2), tx = grad.dim(grad.rank() - 1);
  if (ny == ty && nx == tx) return grad;
  return per_plane(grad, ny, nx, [&](std::span<const double> p) { return resize_plane_adjoint(p, ty, tx, ny, nx); });
}

template <typename T>
Tensor<T> zero_interleave(const Tensor<T>& h, std::size_t factor, std::size_t ty, std::size_t tx) {
  if (factor == 0) throw Error("zero_interleave: factor must be >= 1");
  const std::size_t planes = plane_count(h);
  const std::size_t ny = h.dim(h.rank() - 2), nx = h.dim(h.rank() - 1);
  if (ty > factor * ny || tx > factor * nx) {
    throw ShapeError("zero_interleave: target " + std::to_string(ty) + "x" + std::to_string(tx) + " exceeds " +
                     std::to_string(factor) + " x " + shape_string(h.shape()));
  }
  Tensor<T> out(with_plane(h.shape(), ty, tx));
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = h.ptr() + p * ny * nx;
    T* dst = out.ptr() + p * ty * tx;
    for (std::size_t y = 0; y < ty; y += factor)
      for (std::size_t x = 0; x < tx; x += factor) dst[y * tx + x] = src[(y / factor) * nx + x / factor];
  }
  return out;
}

template <typename T>
Tensor<T> zero_interleave(const Tensor<T>& h, std::size_t factor) {
  if (factor == 0) throw Error("zero_interleave: factor must be >= 1");
  return zero_interleave(h, factor, factor * h.dim(h.rank() - 2), factor * h.dim(h.rank() - 1));
}

template <typename T>
Tensor<T> decimate(const Tensor<T>& h, std::size_t factor, std::size_t oy, std::size_t ox) {
  if (factor == 0) throw Error("decimate: factor must be >= 1");
  const std::size_t planes = plane_count(h);
  const std::size_t ny = h.dim(h.rank() - 2), nx = h.dim(h.rank() - 1);
  Tensor<T> out(with_plane(h.shape(), oy, ox));
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = h.ptr() + p * ny * nx;
    T* dst = out.ptr() + p * oy * ox;
    for (std::size_t y = 0; y < oy && y * factor < ny; ++y)
      for (std::size_t x = 0; x < ox && x * factor < nx; ++x) dst[y * ox + x] = src[y * factor * nx + x * factor];
  }
  return out;
}

SincFilter SincFilter::lowpass(double cutoff, std::size_t taps, double beta) {
  if (!(cutoff > 0.0) || cutoff > 0.5) throw Error("sinc filter: cutoff must be in (0, 0.5] cycles/sample");
  std::vector<double> h = kaiser_sinc(taps, beta, 2.0 * cutoff);
  double total = 0.0;
  for (double v : h) total += v;
  for (double& v : h) v /= total;
  return SincFilter(cutoff, beta, std::move(h));
}

SincFilter SincFilter::interpolator(std::size_t factor, std::size_t taps, double beta) {
  if (factor == 0) throw Error("sinc interpolator: factor must be >= 1");
  std::vector<double> h = kaiser_sinc(taps, beta, 1.0 / double(factor));
  const long r = long(taps / 2);
  for (std::size_t phase = 0; phase < factor; ++phase) {
    double total = 0.0;
    for (long i = -r; i <= r; ++i)
      if (((i % long(factor)) + long(factor)) % long(factor) == long(phase)) total += h[std::size_t(i + r)];
    for (long i = -r; i <= r; ++i)
      if (((i % long(factor)) + long(factor)) % long(factor) == long(phase)) h[std::size_t(i + r)] /= total;
  }
  return SincFilter(0.5 / double(factor), beta, std::move(h));
}

SincFilter SincFilter::for_bandwidths(double w_in, double w_out, std::size_t taps, double beta) {
  if (!(w_in > 0.0) || !(w_out > 0.0)) throw Error("sinc filter: bandwidths must be positive");
  if (w_out > w_in) {
    throw Error("antialias_downsample: w_out " + std::to_string(w_out) + " > w_in " + std::to_string(w_in) +
                " would alias");
  }
  return lowpass(0.5 * w_out / w_in, taps, beta);
}

std::vector<double> SincFilter::kernel2d() const {
  const std::size_t k = taps_.size();
  std::vector<double> out(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = taps_[i] * taps_[j];
  return out;
}

template <typename T>
Tensor<T> filter_circular(const Tensor<T>& h, const SincFilter& filter) {
  const std::size_t planes = plane_count(h);
  const std::size_t ny = h.dim(h.rank() - 2), nx = h.dim(h.rank() - 1);
  const auto iy = circular_index(ny, filter.taps().size());
  const auto ix = circular_index(nx, filter.taps().size());
  Tensor<T> out(h.shape());
  std::vector<double> in(ny * nx), res(ny * nx), tmp;
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(h.ptr() + p * ny * nx, ny * nx, in.begin());
    filter_plane(in.data(), res.data(), ny, nx, filter.taps(), iy, ix, tmp);
    std::copy(res.begin(), res.end(), out.ptr() + p * ny * nx);
  }
  return out;
}

template <typename T>
Tensor<T> antialias_downsample(const Tensor<T>& h, double w_in, double w_out, std::size_t stride) {
  if (stride == 0) throw Error("antialias_downsample: stride must be >= 1");
  const SincFilter f = SincFilter::for_bandwidths(w_in, w_out);
  const std::size_t ny = h.dim(h.rank() - 2), nx = h.dim(h.rank() - 1);
  return decimate(filter_circular(h, f), stride, ceil_div(ny, stride), ceil_div(nx, stride));
}

template <typename T>
Tensor<T> antialias_downsample_adjoint(const Tensor<T>& grad, std::size_t stride, std::size_t ny, std::size_t nx) {
  const SincFilter f = SincFilter::for_bandwidths(double(stride), 1.0);
  return filter_circular(zero_interleave(grad, stride, ny, nx), f);
}

template <typename T>
Tensor<T> interp_upsample(const Tensor<T>& h, std::size_t factor, std::size_t ty, std::size_t tx) {
  if (factor == 0) throw Error("interp_upsample: factor must be >= 1");
  if (factor == 1) {
    if (ty != h.dim(h.rank() - 2) || tx != h.dim(h.rank() - 1)) throw ShapeError("interp_upsample: factor 1 with crop");
    return h;
  }
  const Tensor<T> up = filter_circular(zero_interleave(h, factor), SincFilter::interpolator(factor));
  if (ty == up.dim(up.rank() - 2) && tx == up.dim(up.rank() - 1)) return up;
  const std::size_t planes = plane_count(up);
  const std::size_t uy = up.dim(up.rank() - 2), ux = up.dim(up.rank() - 1);
  Tensor<T> out(with_plane(h.shape(), ty, tx));
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ty; ++y)
      std::copy_n(up.ptr() + (p * uy + y) * ux, tx, out.ptr() + (p * ty + y) * tx);
  return out;
}

template <typename T>
Tensor<T> interp_upsample(const Tensor<T>& h, std::size_t factor) {
  return interp_upsample(h, factor, factor * h.dim(h.rank() - 2), factor * h.dim(h.rank() - 1));
}

template <typename T>
Tensor<T> interp_upsample_adjoint(const Tensor<T>& grad, std::size_t factor, std::size_t ny, std::size_t nx) {
  if (factor == 1) return grad;
  const std::size_t ty = grad.dim(grad.rank() - 2), tx = grad.dim(grad.rank() - 1);
  const std::size_t uy = factor * ny, ux = factor * nx;
  Tensor<T> padded(with_plane(grad.shape(), uy, ux));
  const std::size_t planes = plane_count(grad);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ty; ++y)
      std::copy_n(grad.ptr() + (p * ty + y) * tx, tx, padded.ptr() + (p * uy + y) * ux);
  return decimate(filter_circular(padded, SincFilter::interpolator(factor)), factor, ny, nx);
}

RadialSpectrum radial_power_spectrum(std::span<const double> plane, std::size_t n) {
  if (plane.size() != n * n) throw ShapeError("radial_power_spectrum: field must be square " + std::to_string(n) + "x" + std::to_string(n));
  std::vector<Complex> spec(plane.begin(), plane.end());
  fft2(spec, n, n, false);
  const std::size_t bins = std::size_t(std::lround(std::sqrt(2.0) * double(n) / 2.0)) + 1;
  RadialSpectrum out;
  out.power.assign(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  const double norm = 1.0 / (double(n) * double(n));
  for (std::size_t ky = 0; ky < n; ++ky) {
    for (std::size_t kx = 0; kx < n; ++kx) {
      const double sy = double(signed_bin(ky, n)), sx = double(signed_bin(kx, n));
      const std::size_t b = std::size_t(std::lround(std::hypot(sy, sx)));
      out.power[b] += std::norm(spec[ky * n + kx] * norm);
      ++counts[b];
    }
  }
  out.k.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out.k[b] = double(b);
    if (counts[b]) out.power[b] /= double(counts[b]);
  }
  return out;
}

void write_spectrum_csv(std::ostream& out, const RadialSpectrum& spectrum) {
  out << "k,power\n";
  out.precision(17);
  for (std::size_t b = 0; b < spectrum.k.size(); ++b) out << spectrum.k[b] << ',' << spectrum.power[b] << '\n';
}

#define FSR_INSTANTIATE(T)                                                                             \
  template Tensor<T> resize(const Tensor<T>&, std::size_t, std::size_t);                               \
  template Tensor<T> resize_adjoint(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> zero_interleave(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> zero_interleave(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> decimate(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                \
  template Tensor<T> filter_circular(const Tensor<T>&, const SincFilter&);                             \
  template Tensor<T> antialias_downsample(const Tensor<T>&, double, double, std::size_t);              \
  template Tensor<T> antialias_downsample_adjoint(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> interp_upsample(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> interp_upsample(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> interp_upsample_adjoint(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)

#undef FSR_INSTANTIATE

}  // namespace fsr::spectral
