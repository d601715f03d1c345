#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

/// Axis-aligned domain; x runs along columns, y along rows.
struct Box {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  Box scaled(double f) const { return {x_min * f, x_max * f, y_min * f, y_max * f}; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Values sampled at cell centers x_i = x_min + (i + 0.5) dx of a regular grid.
struct GridField {
  Tensor<double> values;  // (c, n_y, n_x)
  Box box;

  GridField() = default;
  explicit GridField(Tensor<double> v, Box b = {});

  std::size_t channels() const { return values.dim(0); }
  std::size_t ny() const { return values.dim(1); }
  std::size_t nx() const { return values.dim(2); }
  double dx() const { return box.width() / double(nx()); }
  double dy() const { return box.height() / double(ny()); }
  double x_center(std::size_t i) const { return box.x_min + (double(i) + 0.5) * dx(); }
  double y_center(std::size_t j) const { return box.y_min + (double(j) + 0.5) * dy(); }
};

struct SRPair {
  GridField lr;
  GridField hr;
  double scale_y = 1.0, scale_x = 1.0;
};

enum class Degradation { spectral, bicubic };
Degradation parse_degradation(const std::string& name);

enum class Interp { nearest, bilinear, bicubic };
Interp parse_interp(const std::string& name);
const char* interp_name(Interp method);

/// LR extents round(hr / s) per axis; LR made by spectral truncation or bicubic resampling.
SRPair make_pair(const GridField& hr, double s, Degradation method = Degradation::spectral);

/// Smallest LR extent make_pair accepts.
inline constexpr std::size_t kMinLrExtent = 8;

/// Sub-field [y0, y0 + cy) x [x0, x0 + cx) with its box remapped to [-1, 1]^2.
GridField crop(const GridField& field, std::size_t y0, std::size_t x0, std::size_t cy, std::size_t cx);
GridField random_crop(const GridField& field, std::size_t cy, std::size_t cx, std::mt19937_64& rng);
GridField center_crop(const GridField& field, std::size_t cy, std::size_t cx);

/// Cell-center-aligned resampling to (ty, tx). Bilinear extrapolates linearly past the outer
/// centers so affine fields are reproduced exactly; bicubic is Catmull-Rom with clamped taps.
GridField interpolate(const GridField& lr, std::size_t ty, std::size_t tx, Interp method);

double mse(const Tensor<double>& pred, const Tensor<double>& target);

/// Target max - min, or 1 when the target is constant.
double data_range(const Tensor<double>& target);

/// 10 log10(range^2 / mse); +infinity when mse == 0.
double psnr(const Tensor<double>& pred, const Tensor<double>& target, std::optional<double> range = std::nullopt);

/// Mean local SSIM over (c, y, x) fields with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, valid windows only. Fields narrower than 11 shrink the window to fit.
double ssim(const Tensor<double>& pred, const Tensor<double>& target, std::optional<double> range = std::nullopt);

/// SFB1 dataset files: every record shares channels and extents.
std::string serialize_sfb(const std::vector<GridField>& records);
std::vector<GridField> parse_sfb(const std::string& bytes, const std::string& origin = "<memory>");
void write_sfb(const std::filesystem::path& path, const std::vector<GridField>& records);
std::vector<GridField> read_sfb(const std::filesystem::path& path);

}  // namespace fsr
