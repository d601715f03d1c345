#pragma once

#include <cstdint>

#include "fsr/config.hpp"
#include "fsr/decoder.hpp"
#include "fsr/encoder.hpp"
#include "fsr/sampler.hpp"

namespace fsr {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;  // in_features and out_channels follow from the encoder
  bool residual = false;  // add the spectral resize of the input to the decoder output
};

/// Reads `[encoder] [decoder] [hierarchy]` from a run config; unknown keys are errors.
ModelConfig model_config_from(const Config& config);

/// Encoder -> sampler -> decoder with its parameters.
class Model {
 public:
  static Model create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }

  ParamStore<float>& params() { return params_; }
  const ParamStore<float>& params() const { return params_; }

  /// Prediction on the (ty, tx) cell-center grid of the input's box, as a (d_b, ty, tx) node.
  /// `lr` is (c, h, w). The parameter binding may come from params() cast to T.
  template <typename T>
  Var<T> forward(const Bound<T>& p, const Tensor<T>& lr, std::size_t ty, std::size_t tx, const Box& box = {}) const;

  /// Inference in 32-bit with constant parameters.
  GridField predict(const GridField& lr, std::size_t ty, std::size_t tx) const;

  /// Parameters under "param." and the architecture under "meta.".
  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ckpt);

 private:
  ModelConfig cfg_;
  ParamStore<float> params_;
  Encoder encoder_;
  Decoder decoder_;
};

}  // namespace fsr
