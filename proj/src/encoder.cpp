#include "fsr/encoder.hpp"

namespace fsr {

void validate(const EncoderConfig& cfg) {
  if (cfg.ratio != 1 && cfg.ratio != 2 && cfg.ratio != 4) {
    throw Error("encoder: upsample ratio must be 1, 2 or 4, got " + std::to_string(cfg.ratio));
  }
  if (cfg.in_channels == 0) throw Error("encoder: input channels must be positive");
  if (cfg.channels < cfg.in_channels) {
    throw Error("encoder: feature channels " + std::to_string(cfg.channels) + " below input channels " +
                std::to_string(cfg.in_channels));
  }
}

template <typename T>
Encoder Encoder::create(ParamStore<T>& store, const EncoderConfig& cfg, std::mt19937_64& rng, const std::string& prefix) {
  validate(cfg);
  Encoder e;
  e.cfg_ = cfg;
  const std::size_t a = cfg.in_channels, z = cfg.channels;
  if (cfg.ratio > 1) {
    e.up_spatial_ = store.glorot(prefix + "up.spatial.w", {a, a, 3, 3}, a * 9, a * 9, rng);
    e.up_fourier_ = store.glorot(prefix + "up.fourier.w", {a, a, 1, 1}, a, a, rng);
  }
  e.head_w_ = store.glorot(prefix + "head.w", {z, a, 3, 3}, a * 9, z * 9, rng);
  e.head_b_ = store.zeros(prefix + "head.b", {z});
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string name = prefix + "block" + std::to_string(i) + ".";
    Block b;
    b.w1 = store.glorot(name + "conv1.w", {z, z, 3, 3}, z * 9, z * 9, rng);
    b.b1 = store.zeros(name + "conv1.b", {z});
    b.w2 = store.glorot(name + "conv2.w", {z, z, 3, 3}, z * 9, z * 9, rng);
    b.b2 = store.zeros(name + "conv2.b", {z});
    e.blocks_.push_back(b);
  }
  return e;
}

template <typename T>
Var<T> Encoder::hybrid_upsample(const Bound<T>& p, const Var<T>& x) const {
  const std::size_t r = cfg_.ratio;
  if (r == 1) return x;
  const Shape& s = x.shape();
  const Var<T> spatial = conv2d(zero_interleave(x, r), p[up_spatial_]);
  const Var<T> fourier = conv2d(spectral_resize(x, s[2] * r, s[3] * r), p[up_fourier_]);
  return add(spatial, fourier);
}

template <typename T>
FeatureMap<T> Encoder::encode(const Bound<T>& p, const Var<T>& x, const Box& box) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != cfg_.in_channels) {
    throw ShapeError("encode: expected (1, " + std::to_string(cfg_.in_channels) + ", h, w) input, got " +
                     shape_string(s));
  }
  Var<T> h = conv2d(hybrid_upsample(p, x), p[head_w_], p[head_b_]);
  for (const Block& b : blocks_) {
    const Var<T> inner = activate(conv2d(h, p[b.w1], p[b.b1]), cfg_.activation);
    h = add(h, conv2d(inner, p[b.w2], p[b.b2]));
  }
  return FeatureMap<T>{h, box};
}

#define FSR_INSTANTIATE(T)                                                                                  \
  template Encoder Encoder::create<T>(ParamStore<T>&, const EncoderConfig&, std::mt19937_64&, const std::string&); \
  template Var<T> Encoder::hybrid_upsample<T>(const Bound<T>&, const Var<T>&) const;                       \
  template FeatureMap<T> Encoder::encode<T>(const Bound<T>&, const Var<T>&, const Box&) const;
FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)
#undef FSR_INSTANTIATE

}  // namespace fsr
