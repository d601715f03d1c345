#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fsr/tensor.hpp"

/// Fourier-domain machinery: FFTs, spectral resizing, zero-interleave upsampling,
/// windowed-sinc anti-aliasing and radial power spectra.
///
/// All field operations act on the last two extents of a tensor, plane by plane.
namespace fsr::spectral {

using Complex = std::complex<double>;

/// Unnormalized 2D DFT in place. The inverse uses the conjugate kernel and no 1/n factor.
void fft2(std::vector<Complex>& data, std::size_t ny, std::size_t nx, bool inverse);

/// Resamples one plane by zero-padding or truncating its spectrum symmetrically about DC.
/// Pointwise values are preserved (a constant stays the same constant). When enlarging an
/// even grid the Nyquist coefficient is split evenly between +n/2 and -n/2; when shrinking
/// to an even grid the two coefficients at +-m/2 are summed into the single Nyquist bin.
/// Samples are taken as cell centers of the same period, so each mode is phase-shifted to
/// the destination centers rather than to a shared first sample.
std::vector<double> resize_plane(std::span<const double> plane, std::size_t ny, std::size_t nx, std::size_t ty,
                                 std::size_t tx);

/// Exact adjoint of resize_plane(., ny, nx, ty, tx): maps a (ty, tx) plane back to (ny, nx).
std::vector<double> resize_plane_adjoint(std::span<const double> plane, std::size_t ty, std::size_t tx,
                                         std::size_t ny, std::size_t nx);

template <typename T>
Tensor<T> resize(const Tensor<T>& field, std::size_t ty, std::size_t tx);

template <typename T>
Tensor<T> resize_adjoint(const Tensor<T>& grad, std::size_t ny, std::size_t nx);

/// out[i, j] = h[i / N, j / N] when N divides both indices, else 0. Output extents are
/// (ty, tx), which must not exceed N times the input extents.
template <typename T>
Tensor<T> zero_interleave(const Tensor<T>& h, std::size_t factor, std::size_t ty, std::size_t tx);

template <typename T>
Tensor<T> zero_interleave(const Tensor<T>& h, std::size_t factor);

/// Keeps samples at multiples of N; the adjoint of zero_interleave.
template <typename T>
Tensor<T> decimate(const Tensor<T>& h, std::size_t factor, std::size_t oy, std::size_t ox);

/// Separable Kaiser-windowed sinc kernel.
class SincFilter {
 public:
  /// Low-pass at `cutoff` cycles per sample, normalized to unit DC gain.
  static SincFilter lowpass(double cutoff, std::size_t taps = 33, double beta = 8.0);

  /// Interpolator for zero-stuffed signals: cutoff 1/(2N), each polyphase branch sums to 1,
  /// so the 1D DC gain is N (N^2 in 2D) and constants survive upsampling.
  static SincFilter interpolator(std::size_t factor, std::size_t taps = 33, double beta = 8.0);

  /// Low-pass taking a signal of bandwidth w_in down to w_out (any consistent units). The
  /// input grid is assumed critically sampled, so the cutoff is w_out / (2 w_in) cycles/sample.
  static SincFilter for_bandwidths(double w_in, double w_out, std::size_t taps = 33, double beta = 8.0);

  double cutoff() const { return cutoff_; }
  double beta() const { return beta_; }
  std::span<const double> taps() const { return taps_; }
  std::size_t radius() const { return taps_.size() / 2; }

  /// Outer product of the 1D factor, (taps x taps) row-major.
  std::vector<double> kernel2d() const;

 private:
  SincFilter(double cutoff, double beta, std::vector<double> taps) : cutoff_(cutoff), beta_(beta), taps_(std::move(taps)) {}
  double cutoff_;
  double beta_;
  std::vector<double> taps_;
};

/// Circular (periodic) separable convolution with a symmetric kernel.
template <typename T>
Tensor<T> filter_circular(const Tensor<T>& h, const SincFilter& filter);

/// Low-pass with the w_out sinc filter, then keep every stride-th sample (ceil(n / stride) per axis).
template <typename T>
Tensor<T> antialias_downsample(const Tensor<T>& h, double w_in, double w_out, std::size_t stride);

template <typename T>
Tensor<T> antialias_downsample_adjoint(const Tensor<T>& grad, std::size_t stride, std::size_t ny, std::size_t nx);

/// Zero-interleave by N, interpolate, then crop to (ty, tx) where ty <= N * ny.
template <typename T>
Tensor<T> interp_upsample(const Tensor<T>& h, std::size_t factor, std::size_t ty, std::size_t tx);

template <typename T>
Tensor<T> interp_upsample(const Tensor<T>& h, std::size_t factor);

template <typename T>
Tensor<T> interp_upsample_adjoint(const Tensor<T>& grad, std::size_t factor, std::size_t ny, std::size_t nx);

struct RadialSpectrum {
  std::vector<double> k;
  std::vector<double> power;
};

/// |FFT / n^2|^2 averaged over annuli of unit wavenumber width (bin b holds round(|k|) == b).
RadialSpectrum radial_power_spectrum(std::span<const double> plane, std::size_t n);

/// `k,power` header then one row per bin.
void write_spectrum_csv(std::ostream& out, const RadialSpectrum& spectrum);

}  // namespace fsr::spectral
