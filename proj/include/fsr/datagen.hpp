#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsr/config.hpp"
#include "fsr/fields.hpp"

namespace fsr {

/// Gaussian random field on an n x n periodic grid. Wavenumbers count cycles across the
/// domain; power falls off as |k|^-gamma inside [k_min, k_max] and is zero outside.
struct GrfSpec {
  std::size_t n = 64;
  double gamma = 2.0;
  double k_min = 1.0;
  double k_max = 10.0;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
};

/// Filtered complex white noise: Hermitian by construction, zero mean, unit variance per channel.
GridField generate_grf(const GrfSpec& spec);

/// 2D decaying turbulence on [0, 2pi]^2 in vorticity-streamfunction form.
struct TurbSpec {
  std::size_t n = 64;
  double nu = 1e-3;
  double dt = 2e-3;
  std::size_t steps = 2000;
  double k0 = 4.0;  // peak of the initial Gaussian-ring energy spectrum
  std::uint64_t seed = 0;
};

struct TurbDiagnostics {
  std::vector<double> energy;     // 0.5 <u.u>, one entry per step including t = 0
  std::vector<double> enstrophy;  // 0.5 <w^2>
  std::vector<double> mean_vorticity;
  double max_divergence = 0.0;  // spectral-norm divergence of the reconstructed velocity
};

/// Runs the solver and returns `snapshots` vorticity fields taken every steps/snapshots steps.
/// Throws when the step violates dt * n * u_max < 0.5.
std::vector<GridField> simulate_turbulence(const TurbSpec& spec, std::size_t snapshots,
                                           TurbDiagnostics* diagnostics = nullptr);

/// Same, from an explicit n x n row-major initial vorticity (its mean is removed).
std::vector<GridField> simulate_turbulence(const TurbSpec& spec, std::vector<double> vorticity,
                                           std::size_t snapshots, TurbDiagnostics* diagnostics = nullptr);

/// Random vorticity with a Gaussian-ring energy spectrum peaked at k0 and unit rms velocity.
std::vector<double> initial_vorticity(const TurbSpec& spec);

enum class DataSource { grf, turb };

struct DatasetSpec {
  DataSource source = DataSource::grf;
  GrfSpec grf;
  TurbSpec turb;
  std::size_t train = 70, valid = 20, test = 10;
  std::uint64_t seed = 0;
};

/// Reads `[data] [grf] [turb] [splits]` sections; unknown keys are errors.
DatasetSpec dataset_spec_from_config(const Config& config);

struct DatasetSummary {
  std::vector<std::filesystem::path> files;  // train, valid, test
  std::vector<std::size_t> counts;
};

/// Writes train.sfb, valid.sfb and test.sfb under `dir`. Splits use disjoint seed streams.
DatasetSummary build_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

/// Records of one split, exactly as build_dataset would write them (before f32 rounding).
std::vector<GridField> generate_split(const DatasetSpec& spec, std::size_t split, std::size_t count);

}  // namespace fsr
