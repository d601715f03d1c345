#pragma once

#include <random>
#include <utility>
#include <vector>

#include "fsr/attention.hpp"
#include "fsr/layers.hpp"

namespace fsr {

/// K-level layout. Level 1 is the query grid; each level down keeps ceil(n / 2) samples per
/// axis and halves the bandwidth.
struct HierarchySpec {
  std::size_t levels = 2;  // K
  std::size_t width = 32;  // d_h, shared by all levels
  std::size_t blocks = 2;  // attention + feed-forward blocks per level and side
  std::size_t heads = 4;
  std::size_t ffn_mult = 2;
};

/// Grid extents of every level for a (ty, tx) query grid. Throws "hierarchy too deep for
/// grid" when min(ty, tx) < 2^K.
std::vector<std::pair<std::size_t, std::size_t>> level_extents(const HierarchySpec& spec, std::size_t ty, std::size_t tx);

/// Band limit of every level in cycles per level-1 sample: 1/2, 1/4, ...
std::vector<double> level_bandwidths(const HierarchySpec& spec);

struct DecoderConfig {
  std::size_t in_features = 4 * 64 + 10;  // 4 d_z + 10 from the sampler
  std::size_t out_channels = 1;           // d_b
  std::size_t lift_hidden = 0;            // 0: use the hierarchy width
  std::size_t proj_hidden = 0;
  Activation activation = Activation::gelu;
  HierarchySpec hierarchy;
  double residual_gain = 0.1;  // scale of the last layer in each residual branch at init
};

class Decoder {
 public:
  struct Block {
    AttentionLayout attention;
    Dense ffn_in, ffn_out;
  };

  Decoder() = default;

  template <typename T>
  static Decoder create(ParamStore<T>& store, const DecoderConfig& cfg, std::mt19937_64& rng,
                        const std::string& prefix = "dec.");

  const DecoderConfig& config() const { return cfg_; }

  /// Pointwise two-layer map (m, in_features) -> (m, d_h).
  template <typename T>
  Var<T> lift(const Bound<T>& p, const Var<T>& z) const;

  /// h + attn(norm(h)), then h + ffn(norm(h)), on (m, d_h) tokens.
  template <typename T>
  Var<T> level_block(const Bound<T>& p, const Block& block, const Var<T>& h) const;

  /// Pointwise two-layer map (m, d_h) -> (m, d_b).
  template <typename T>
  Var<T> project(const Bound<T>& p, const Var<T>& h) const;

  /// Full U-Net on ensembled features of a (ty, tx) grid; returns a (d_b, ty, tx) field.
  template <typename T>
  Var<T> decode(const Bound<T>& p, const Var<T>& z, std::size_t ty, std::size_t tx) const;

  /// Blocks at the coarsest level (all blocks when K = 1).
  const std::vector<Block>& bottom_blocks() const { return bottom_; }

 private:
  template <typename T>
  Var<T> run(const Bound<T>& p, const std::vector<Block>& blocks, Var<T> h) const;

  DecoderConfig cfg_;
  Dense lift1_, lift2_, proj1_, proj2_;
  std::vector<std::vector<Block>> down_, up_;  // index k - 1 for levels k = 1 .. K-1
  std::vector<Block> bottom_;
};

}  // namespace fsr
