#include "fsr/model.hpp"

#include <random>

#include "fsr/spectral.hpp"

namespace fsr {

namespace {

constexpr Activation kActivations[] = {Activation::relu, Activation::gelu, Activation::leaky_relu, Activation::elu,
                                       Activation::selu};

double activation_code(Activation a) {
  for (std::size_t i = 0; i < std::size(kActivations); ++i)
    if (kActivations[i] == a) return double(i);
  return 0.0;
}

Activation activation_from_code(double code) {
  const auto i = std::size_t(code);
  if (code < 0 || i >= std::size(kActivations)) throw Error("checkpoint: bad activation code " + std::to_string(code));
  return kActivations[i];
}

void finish(ModelConfig& cfg) {
  cfg.decoder.in_features = 4 * cfg.encoder.channels + kEnsembleExtras;
  cfg.decoder.out_channels = cfg.encoder.in_channels;
}

}  // namespace

ModelConfig model_config_from(const Config& config) {
  config.check_keys("encoder", {"in_channels", "channels", "blocks", "ratio", "activation"});
  config.check_keys("decoder", {"lift_hidden", "proj_hidden", "activation", "residual_gain", "residual"});
  config.check_keys("hierarchy", {"levels", "width", "blocks", "heads", "ffn_mult"});
  ModelConfig m;
  EncoderConfig& e = m.encoder;
  e.in_channels = config.count("encoder", "in_channels", e.in_channels);
  e.channels = config.count("encoder", "channels", e.channels);
  e.blocks = config.count("encoder", "blocks", e.blocks);
  e.ratio = config.count("encoder", "ratio", e.ratio);
  e.activation = parse_activation(config.string("encoder", "activation", std::string(activation_name(e.activation))));
  DecoderConfig& d = m.decoder;
  d.lift_hidden = config.count("decoder", "lift_hidden", d.lift_hidden);
  d.proj_hidden = config.count("decoder", "proj_hidden", d.proj_hidden);
  d.activation = parse_activation(config.string("decoder", "activation", std::string(activation_name(d.activation))));
  d.residual_gain = config.number("decoder", "residual_gain", d.residual_gain);
  m.residual = config.boolean("decoder", "residual", m.residual);
  HierarchySpec& h = d.hierarchy;
  h.levels = config.count("hierarchy", "levels", h.levels);
  h.width = config.count("hierarchy", "width", h.width);
  h.blocks = config.count("hierarchy", "blocks", h.blocks);
  h.heads = config.count("hierarchy", "heads", h.heads);
  h.ffn_mult = config.count("hierarchy", "ffn_mult", h.ffn_mult);
  validate(e);
  finish(m);
  return m;
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.cfg_ = cfg;
  finish(m.cfg_);
  std::mt19937_64 rng(seed);
  m.encoder_ = Encoder::create(m.params_, m.cfg_.encoder, rng);
  m.decoder_ = Decoder::create(m.params_, m.cfg_.decoder, rng);
  return m;
}

template <typename T>
Var<T> Model::forward(const Bound<T>& p, const Tensor<T>& lr, std::size_t ty, std::size_t tx, const Box& box) const {
  if (lr.rank() != 3 || lr.dim(0) != cfg_.encoder.in_channels) {
    throw ShapeError("model: expected (" + std::to_string(cfg_.encoder.in_channels) + ", h, w) input, got " +
                     shape_string(lr.shape()));
  }
  Tape<T>& tape = p.tape();
  const Var<T> x = tape.constant(lr.reshaped({1, lr.dim(0), lr.dim(1), lr.dim(2)}));
  const FeatureMap<T> map = encoder_.encode(p, x, box);
  const Var<T> z = render(map, plan_grid(geometry(map), ty, tx));
  const Var<T> out = decoder_.decode(p, z, ty, tx);
  if (!cfg_.residual) return out;
  return add(out, tape.constant(spectral::resize(lr, ty, tx)));
}

GridField Model::predict(const GridField& lr, std::size_t ty, std::size_t tx) const {
  Tape<float> tape;
  const Bound<float> p(tape, params_, false);
  const Var<float> out = forward(p, lr.values.cast<float>(), ty, tx, lr.box);
  return GridField(out.value().cast<double>(), lr.box);
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint c;
  const auto& e = cfg_.encoder;
  const auto& d = cfg_.decoder;
  const auto& h = d.hierarchy;
  c.put_scalar("meta.encoder.in_channels", double(e.in_channels));
  c.put_scalar("meta.encoder.channels", double(e.channels));
  c.put_scalar("meta.encoder.blocks", double(e.blocks));
  c.put_scalar("meta.encoder.ratio", double(e.ratio));
  c.put_scalar("meta.encoder.activation", activation_code(e.activation));
  c.put_scalar("meta.decoder.lift_hidden", double(d.lift_hidden));
  c.put_scalar("meta.decoder.proj_hidden", double(d.proj_hidden));
  c.put_scalar("meta.decoder.activation", activation_code(d.activation));
  c.put_scalar("meta.hierarchy.levels", double(h.levels));
  c.put_scalar("meta.hierarchy.width", double(h.width));
  c.put_scalar("meta.hierarchy.blocks", double(h.blocks));
  c.put_scalar("meta.hierarchy.heads", double(h.heads));
  c.put_scalar("meta.hierarchy.ffn_mult", double(h.ffn_mult));
  c.put_scalar("meta.residual", cfg_.residual ? 1.0 : 0.0);
  c.put_params(params_, "param.");
  return c;
}

Model Model::from_checkpoint(const Checkpoint& c) {
  ModelConfig cfg;
  auto count = [&](const char* name) { return std::size_t(c.scalar(name)); };
  cfg.encoder.in_channels = count("meta.encoder.in_channels");
  cfg.encoder.channels = count("meta.encoder.channels");
  cfg.encoder.blocks = count("meta.encoder.blocks");
  cfg.encoder.ratio = count("meta.encoder.ratio");
  cfg.encoder.activation = activation_from_code(c.scalar("meta.encoder.activation"));
  cfg.decoder.lift_hidden = count("meta.decoder.lift_hidden");
  cfg.decoder.proj_hidden = count("meta.decoder.proj_hidden");
  cfg.decoder.activation = activation_from_code(c.scalar("meta.decoder.activation"));
  auto& h = cfg.decoder.hierarchy;
  h.levels = count("meta.hierarchy.levels");
  h.width = count("meta.hierarchy.width");
  h.blocks = count("meta.hierarchy.blocks");
  h.heads = count("meta.hierarchy.heads");
  h.ffn_mult = count("meta.hierarchy.ffn_mult");
  cfg.residual = c.scalar("meta.residual") != 0.0;
  Model m = create(cfg, 0);
  c.get_params(m.params_, "param.");
  return m;
}

template Var<float> Model::forward<float>(const Bound<float>&, const Tensor<float>&, std::size_t, std::size_t, const Box&) const;
template Var<double> Model::forward<double>(const Bound<double>&, const Tensor<double>&, std::size_t, std::size_t, const Box&) const;

}  // namespace fsr
