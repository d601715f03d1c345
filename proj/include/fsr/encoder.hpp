#pragma once

#include <random>

#include "fsr/fields.hpp"
#include "fsr/params.hpp"

namespace fsr {

struct EncoderConfig {
  std::size_t in_channels = 1;  // d_a
  std::size_t channels = 64;    // d_z
  std::size_t blocks = 4;
  std::size_t ratio = 1;  // r in {1, 2, 4}
  Activation activation = Activation::gelu;
};

void validate(const EncoderConfig& cfg);

/// Encoder output: a (1, d_z, h, w) feature grid over the input's domain box.
template <typename T>
struct FeatureMap {
  Var<T> z;
  Box box;

  std::size_t channels() const { return z.shape()[1]; }
  std::size_t ny() const { return z.shape()[2]; }
  std::size_t nx() const { return z.shape()[3]; }
  double dx() const { return box.width() / double(nx()); }
  double dy() const { return box.height() / double(ny()); }
};

/// Parameter indices of an encoder inside a ParamStore.
class Encoder {
 public:
  Encoder() = default;

  template <typename T>
  static Encoder create(ParamStore<T>& store, const EncoderConfig& cfg, std::mt19937_64& rng,
                        const std::string& prefix = "enc.");

  const EncoderConfig& config() const { return cfg_; }

  /// Spatial branch (zero-interleave then 3x3 conv) plus Fourier branch (spectral resize
  /// then 1x1 conv), both bias-free, on a (1, d_a, h, w) input. Identity when r = 1.
  template <typename T>
  Var<T> hybrid_upsample(const Bound<T>& p, const Var<T>& x) const;

  /// hybrid_upsample, 3x3 head conv to d_z, then residual conv-act-conv blocks.
  template <typename T>
  FeatureMap<T> encode(const Bound<T>& p, const Var<T>& x, const Box& box = {}) const;

 private:
  struct Block {
    std::size_t w1, b1, w2, b2;
  };
  EncoderConfig cfg_;
  std::size_t up_spatial_ = 0, up_fourier_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::vector<Block> blocks_;
};

}  // namespace fsr
