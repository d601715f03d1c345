#include "fsr/decoder.hpp"

#include <algorithm>

namespace fsr {

namespace {

template <typename T>
std::vector<Decoder::Block> make_blocks(ParamStore<T>& store, const DecoderConfig& cfg, const std::string& name,
                                        std::mt19937_64& rng) {
  const HierarchySpec& h = cfg.hierarchy;
  std::vector<Decoder::Block> out;
  for (std::size_t i = 0; i < h.blocks; ++i) {
    const std::string b = name + ".b" + std::to_string(i);
    Decoder::Block blk;
    blk.attention = make_attention(store, b + ".attn", h.width, h.heads, rng, cfg.residual_gain);
    blk.ffn_in = Dense::create(store, b + ".ffn1", h.width, h.width * h.ffn_mult, rng);
    blk.ffn_out = Dense::create(store, b + ".ffn2", h.width * h.ffn_mult, h.width, rng, cfg.residual_gain);
    out.push_back(blk);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> level_extents(const HierarchySpec& spec, std::size_t ty, std::size_t tx) {
  if (spec.levels == 0) throw Error("hierarchy: need at least one level");
  if (spec.levels >= 32 || std::min(ty, tx) < (std::size_t{1} << spec.levels)) {
    throw Error("hierarchy too deep for grid: " + std::to_string(spec.levels) + " levels need extents >= " +
                std::to_string(std::size_t{1} << std::min<std::size_t>(spec.levels, 31)) + ", got " + std::to_string(ty) +
                "x" + std::to_string(tx));
  }
  std::vector<std::pair<std::size_t, std::size_t>> out{{ty, tx}};
  for (std::size_t k = 1; k < spec.levels; ++k) {
    const auto [y, x] = out.back();
    out.emplace_back((y + 1) / 2, (x + 1) / 2);
  }
  return out;
}

std::vector<double> level_bandwidths(const HierarchySpec& spec) {
  std::vector<double> out;
  double w = 0.5;
  for (std::size_t k = 0; k < spec.levels; ++k, w *= 0.5) out.push_back(w);
  return out;
}

template <typename T>
Decoder Decoder::create(ParamStore<T>& store, const DecoderConfig& cfg, std::mt19937_64& rng, const std::string& prefix) {
  const HierarchySpec& h = cfg.hierarchy;
  if (h.levels == 0 || h.blocks == 0 || h.width == 0 || h.ffn_mult == 0) {
    throw Error("decoder: levels, blocks, width and ffn_mult must be positive");
  }
  if (h.heads == 0 || h.width % h.heads != 0) {
    throw Error("decoder: " + std::to_string(h.heads) + " heads do not divide width " + std::to_string(h.width));
  }
  if (cfg.out_channels == 0 || cfg.in_features == 0) throw Error("decoder: feature widths must be positive");
  Decoder d;
  d.cfg_ = cfg;
  const std::size_t lift_hidden = cfg.lift_hidden ? cfg.lift_hidden : h.width;
  const std::size_t proj_hidden = cfg.proj_hidden ? cfg.proj_hidden : h.width;
  d.lift1_ = Dense::create(store, prefix + "lift1", cfg.in_features, lift_hidden, rng);
  d.lift2_ = Dense::create(store, prefix + "lift2", lift_hidden, h.width, rng);
  for (std::size_t k = 1; k < h.levels; ++k) {
    d.down_.push_back(make_blocks(store, cfg, prefix + "L" + std::to_string(k) + ".down", rng));
  }
  d.bottom_ = make_blocks(store, cfg, prefix + "L" + std::to_string(h.levels) + ".mid", rng);
  for (std::size_t k = 1; k < h.levels; ++k) {
    d.up_.push_back(make_blocks(store, cfg, prefix + "L" + std::to_string(k) + ".up", rng));
  }
  d.proj1_ = Dense::create(store, prefix + "proj1", h.width, proj_hidden, rng);
  d.proj2_ = Dense::create(store, prefix + "proj2", proj_hidden, cfg.out_channels, rng);
  return d;
}

template <typename T>
Var<T> Decoder::lift(const Bound<T>& p, const Var<T>& z) const {
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.in_features) {
    throw ShapeError("decoder lift: expected (m, " + std::to_string(cfg_.in_features) + ") features, got " +
                     shape_string(z.shape()));
  }
  return lift2_(p, activate(lift1_(p, z), cfg_.activation));
}

template <typename T>
Var<T> Decoder::level_block(const Bound<T>& p, const Block& block, const Var<T>& h) const {
  const Var<T> a = add(h, galerkin_attention(p, block.attention, layer_stat_normalize(h)));
  const Var<T> f = block.ffn_out(p, activate(block.ffn_in(p, layer_stat_normalize(a)), cfg_.activation));
  return add(a, f);
}

template <typename T>
Var<T> Decoder::project(const Bound<T>& p, const Var<T>& h) const {
  return proj2_(p, activate(proj1_(p, h), cfg_.activation));
}

template <typename T>
Var<T> Decoder::run(const Bound<T>& p, const std::vector<Block>& blocks, Var<T> h) const {
  for (const Block& b : blocks) h = level_block(p, b, h);
  return h;
}

template <typename T>
Var<T> Decoder::decode(const Bound<T>& p, const Var<T>& z, std::size_t ty, std::size_t tx) const {
  const auto extents = level_extents(cfg_.hierarchy, ty, tx);
  if (z.shape().size() != 2 || z.shape()[0] != ty * tx) {
    throw ShapeError("decode: expected " + std::to_string(ty * tx) + " query rows, got " + shape_string(z.shape()));
  }
  const std::size_t K = extents.size();
  Var<T> h = lift(p, z);
  std::vector<Var<T>> skips;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    h = run(p, down_[k], h);
    skips.push_back(h);
    const auto [ny, nx] = extents[k];
    h = field_to_tokens(descend(tokens_to_field(h, ny, nx)));
  }
  h = run(p, bottom_, h);
  for (std::size_t k = K - 1; k-- > 0;) {
    const auto [ny, nx] = extents[k];
    const auto [cy, cx] = extents[k + 1];
    h = add(field_to_tokens(ascend(tokens_to_field(h, cy, cx), ny, nx)), skips[k]);
    h = run(p, up_[k], h);
  }
  return tokens_to_field(project(p, h), ty, tx);
}

#define FSR_INSTANTIATE(T)                                                                                       \
  template Decoder Decoder::create<T>(ParamStore<T>&, const DecoderConfig&, std::mt19937_64&, const std::string&); \
  template Var<T> Decoder::lift<T>(const Bound<T>&, const Var<T>&) const;                                        \
  template Var<T> Decoder::level_block<T>(const Bound<T>&, const Block&, const Var<T>&) const;                   \
  template Var<T> Decoder::project<T>(const Bound<T>&, const Var<T>&) const;                                     \
  template Var<T> Decoder::decode<T>(const Bound<T>&, const Var<T>&, std::size_t, std::size_t) const;
FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)
#undef FSR_INSTANTIATE

}  // namespace fsr
