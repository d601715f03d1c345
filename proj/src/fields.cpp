#include "fsr/fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fsr/io.hpp"
#include "fsr/spectral.hpp"

namespace fsr {

namespace {

constexpr char kSfbMagic[4] = {'S', 'F', 'B', '1'};
constexpr std::size_t kSfbReserved = 8;

// Source coordinate of destination cell j when n_src cells are resampled to n_dst.
double source_coord(std::size_t j, std::size_t n_src, std::size_t n_dst) {
  return (double(j) + 0.5) * double(n_src) / double(n_dst) - 0.5;
}

double catmull_rom(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct AxisTaps {
  std::vector<std::size_t> index;  // taps_per entries per destination
  std::vector<double> weight;
  std::size_t taps_per = 0;
};

AxisTaps axis_taps(std::size_t n_src, std::size_t n_dst, Interp method) {
  AxisTaps out;
  const long last = long(n_src) - 1;
  auto clamp = [last](long i) { return std::size_t(std::clamp(i, 0L, last)); };
  switch (method) {
    case Interp::nearest:
      out.taps_per = 1;
      for (std::size_t j = 0; j < n_dst; ++j) {
        out.index.push_back(clamp(long(std::floor(source_coord(j, n_src, n_dst) + 0.5))));
        out.weight.push_back(1.0);
      }
      break;
    case Interp::bilinear:
      out.taps_per = 2;
      for (std::size_t j = 0; j < n_dst; ++j) {
        if (n_src == 1) {
          out.index.insert(out.index.end(), {0, 0});
          out.weight.insert(out.weight.end(), {1.0, 0.0});
          continue;
        }
        const double u = source_coord(j, n_src, n_dst);
        const long i0 = std::clamp(long(std::floor(u)), 0L, last - 1);
        const double t = u - double(i0);
        out.index.insert(out.index.end(), {std::size_t(i0), std::size_t(i0 + 1)});
        out.weight.insert(out.weight.end(), {1.0 - t, t});
      }
      break;
    case Interp::bicubic:
      out.taps_per = 4;
      for (std::size_t j = 0; j < n_dst; ++j) {
        const double u = source_coord(j, n_src, n_dst);
        const long i0 = long(std::floor(u));
        const double t = u - double(i0);
        for (long k = -1; k <= 2; ++k) {
          out.index.push_back(clamp(i0 + k));
          out.weight.push_back(catmull_rom(double(k) - t));
        }
      }
      break;
  }
  return out;
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double c = 0.5 * double(size - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = double(i) - c;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

void require_same_shape(const char* op, const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

}  // namespace

GridField::GridField(Tensor<double> v, Box b) : values(std::move(v)), box(b) {
  if (values.rank() != 3) throw ShapeError("grid field: expected (c, y, x), got " + shape_string(values.shape()));
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) throw Error("grid field: box must have positive extent");
}

Degradation parse_degradation(const std::string& name) {
  if (name == "spectral") return Degradation::spectral;
  if (name == "bicubic") return Degradation::bicubic;
  throw Error("unknown degradation '" + name + "' (expected spectral or bicubic)");
}

Interp parse_interp(const std::string& name) {
  if (name == "nearest") return Interp::nearest;
  if (name == "bilinear") return Interp::bilinear;
  if (name == "bicubic") return Interp::bicubic;
  throw Error("unknown interpolation '" + name + "' (expected nearest, bilinear or bicubic)");
}

const char* interp_name(Interp method) {
  switch (method) {
    case Interp::nearest: return "nearest";
    case Interp::bilinear: return "bilinear";
    case Interp::bicubic: return "bicubic";
  }
  return "?";
}

SRPair make_pair(const GridField& hr, double s, Degradation method) {
  if (!(s >= 1.0)) throw Error("make_pair: scale must be >= 1, got " + std::to_string(s));
  const auto ly = std::size_t(std::lround(double(hr.ny()) / s));
  const auto lx = std::size_t(std::lround(double(hr.nx()) / s));
  if (ly < kMinLrExtent || lx < kMinLrExtent) {
    throw Error("make_pair: LR extents " + std::to_string(ly) + "x" + std::to_string(lx) + " below minimum " +
                std::to_string(kMinLrExtent) + " (hr " + std::to_string(hr.ny()) + "x" + std::to_string(hr.nx()) +
                ", scale " + std::to_string(s) + ")");
  }
  SRPair pair;
  pair.hr = hr;
  pair.lr = method == Degradation::spectral ? GridField(spectral::resize(hr.values, ly, lx), hr.box)
                                            : interpolate(hr, ly, lx, Interp::bicubic);
  pair.scale_y = double(hr.ny()) / double(ly);
  pair.scale_x = double(hr.nx()) / double(lx);
  return pair;
}

GridField crop(const GridField& field, std::size_t y0, std::size_t x0, std::size_t cy, std::size_t cx) {
  if (cy == 0 || cx == 0 || y0 + cy > field.ny() || x0 + cx > field.nx()) {
    throw Error("crop: window " + std::to_string(cy) + "x" + std::to_string(cx) + " at (" + std::to_string(y0) + ", " +
                std::to_string(x0) + ") exceeds field " + std::to_string(field.ny()) + "x" + std::to_string(field.nx()));
  }
  Tensor<double> out(Shape{field.channels(), cy, cx});
  for (std::size_t c = 0; c < field.channels(); ++c)
    for (std::size_t y = 0; y < cy; ++y)
      for (std::size_t x = 0; x < cx; ++x) out.at3(c, y, x) = field.values.at3(c, y0 + y, x0 + x);
  return GridField(std::move(out));
}

GridField random_crop(const GridField& field, std::size_t cy, std::size_t cx, std::mt19937_64& rng) {
  if (cy > field.ny() || cx > field.nx()) {
    throw Error("random_crop: crop " + std::to_string(cy) + "x" + std::to_string(cx) + " larger than field " +
                std::to_string(field.ny()) + "x" + std::to_string(field.nx()));
  }
  std::uniform_int_distribution<std::size_t> dy(0, field.ny() - cy), dx(0, field.nx() - cx);
  const std::size_t y0 = dy(rng);
  const std::size_t x0 = dx(rng);
  return crop(field, y0, x0, cy, cx);
}

GridField center_crop(const GridField& field, std::size_t cy, std::size_t cx) {
  if (cy > field.ny() || cx > field.nx()) throw Error("center_crop: crop larger than field");
  return crop(field, (field.ny() - cy) / 2, (field.nx() - cx) / 2, cy, cx);
}

GridField interpolate(const GridField& lr, std::size_t ty, std::size_t tx, Interp method) {
  if (ty == 0 || tx == 0) throw Error("interpolate: target extents must be positive");
  const AxisTaps ay = axis_taps(lr.ny(), ty, method);
  const AxisTaps ax = axis_taps(lr.nx(), tx, method);
  Tensor<double> out(Shape{lr.channels(), ty, tx});
  std::vector<double> rows(lr.nx());
  for (std::size_t c = 0; c < lr.channels(); ++c) {
    for (std::size_t y = 0; y < ty; ++y) {
      std::fill(rows.begin(), rows.end(), 0.0);
      for (std::size_t k = 0; k < ay.taps_per; ++k) {
        const double w = ay.weight[y * ay.taps_per + k];
        const std::size_t sy = ay.index[y * ay.taps_per + k];
        for (std::size_t x = 0; x < lr.nx(); ++x) rows[x] += w * lr.values.at3(c, sy, x);
      }
      for (std::size_t x = 0; x < tx; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ax.taps_per; ++k) acc += ax.weight[x * ax.taps_per + k] * rows[ax.index[x * ax.taps_per + k]];
        out.at3(c, y, x) = acc;
      }
    }
  }
  return GridField(std::move(out), lr.box);
}

double mse(const Tensor<double>& pred, const Tensor<double>& target) {
  require_same_shape("mse", pred, target);
  if (pred.empty()) throw Error("mse: empty fields");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / double(pred.size());
}

double data_range(const Tensor<double>& target) {
  const auto [lo, hi] = std::minmax_element(target.storage().begin(), target.storage().end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

double psnr(const Tensor<double>& pred, const Tensor<double>& target, std::optional<double> range) {
  const double m = mse(pred, target);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  const double r = range.value_or(data_range(target));
  return 10.0 * std::log10(r * r / m);
}

double ssim(const Tensor<double>& pred, const Tensor<double>& target, std::optional<double> range) {
  require_same_shape("ssim", pred, target);
  if (pred.rank() != 3) throw ShapeError("ssim: expected (c, y, x), got " + shape_string(pred.shape()));
  const double L = range.value_or(data_range(target));
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  const std::size_t channels = pred.dim(0), ny = pred.dim(1), nx = pred.dim(2);
  const std::size_t wy = std::min<std::size_t>(11, ny), wx = std::min<std::size_t>(11, nx);
  const std::vector<double> gy = gaussian_window(wy, 1.5), gx = gaussian_window(wx, 1.5);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y0 = 0; y0 + wy <= ny; ++y0) {
      for (std::size_t x0 = 0; x0 + wx <= nx; ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < wy; ++i) {
          for (std::size_t j = 0; j < wx; ++j) {
            const double w = gy[i] * gx[j];
            const double a = pred.at3(c, y0 + i, x0 + j), b = target.at3(c, y0 + i, x0 + j);
            mx += w * a;
            my += w * b;
            sxx += w * a * a;
            syy += w * b * b;
            sxy += w * a * b;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return total / double(count);
}

std::string serialize_sfb(const std::vector<GridField>& records) {
  ByteWriter w;
  w.bytes(kSfbMagic, sizeof kSfbMagic);
  w.u32(std::uint32_t(records.size()));
  const std::size_t c = records.empty() ? 0 : records[0].channels();
  const std::size_t ny = records.empty() ? 0 : records[0].ny();
  const std::size_t nx = records.empty() ? 0 : records[0].nx();
  w.u32(std::uint32_t(c));
  w.u32(std::uint32_t(ny));
  w.u32(std::uint32_t(nx));
  w.u32(0);
  const char reserved[kSfbReserved] = {};
  w.bytes(reserved, kSfbReserved);
  for (const auto& r : records) {
    if (r.channels() != c || r.ny() != ny || r.nx() != nx) {
      throw ShapeError("sfb: records must share extents, got " + shape_string(r.values.shape()) + " vs " +
                       shape_string(records[0].values.shape()));
    }
    w.f32s(r.values.cast<float>().data());
  }
  return w.take();
}

std::vector<GridField> parse_sfb(const std::string& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  char magic[4];
  if (bytes.size() < sizeof magic || (r.bytes(magic, sizeof magic), std::memcmp(magic, kSfbMagic, sizeof magic) != 0)) {
    throw ParseError(origin + ": not an SFB file");
  }
  const std::uint32_t count = r.u32(), c = r.u32(), ny = r.u32(), nx = r.u32(), dtype = r.u32();
  r.skip(kSfbReserved);
  if (dtype != 0) r.fail("unsupported dtype code " + std::to_string(dtype));
  std::vector<GridField> out;
  out.reserve(count);
  Tensor<float> buf(Shape{c, ny, nx});
  for (std::uint32_t i = 0; i < count; ++i) {
    r.f32s(buf.data());
    out.emplace_back(buf.cast<double>());
  }
  if (!r.done()) r.fail("trailing bytes after " + std::to_string(count) + " records");
  return out;
}

void write_sfb(const std::filesystem::path& path, const std::vector<GridField>& records) {
  write_file(path, serialize_sfb(records));
}

std::vector<GridField> read_sfb(const std::filesystem::path& path) { return parse_sfb(read_file(path), path.string()); }

}  // namespace fsr
