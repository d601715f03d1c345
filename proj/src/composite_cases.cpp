#include "fsr/decoder.hpp"
#include "fsr/encoder.hpp"
#include "fsr/model.hpp"
#include "fsr/sampler.hpp"
#include "suite_cases.hpp"

namespace fsr {

namespace {

using V = Var<double>;
using Inputs = std::vector<V>;
using Body = std::function<V(Tape<double>&, const Inputs&)>;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Inputs are the data tensor followed by every entry of `store`; the body sees the store
// entries as a Bound so modules run unchanged.
struct Instance {
  std::vector<Tensor<double>> inputs;
  Body body;
};

template <typename Fn>
Instance with_params(Tensor<double> data, const ParamStore<double>& store, Fn fn) {
  Instance inst;
  inst.inputs.push_back(std::move(data));
  for (const auto& v : store.values()) inst.inputs.push_back(v);
  inst.body = [fn](Tape<double>& tape, const Inputs& v) {
    const Bound<double> p(tape, Inputs(v.begin() + 1, v.end()));
    return fn(p, v[0]);
  };
  return inst;
}

GradCase composite(std::string name, std::function<Instance(std::mt19937_64&)> make) {
  return GradCase{name, 1e-4, [make](std::uint64_t seed) {
                    std::mt19937_64 rng(seed);
                    Instance inst = make(rng);
                    const std::uint64_t probe_seed = rng();
                    return grad_check(
                        [body = inst.body, probe_seed](Tape<double>& tape, const Inputs& v) {
                          const V out = body(tape, v);
                          std::mt19937_64 r(probe_seed);
                          return sum(mul(out, tape.constant(random_tensor(out.shape(), r))));
                        },
                        inst.inputs);
                  }};
}

// Biases start at zero; give them generic values so no path is trivially inactive.
void jitter(ParamStore<double>& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  for (auto& t : store.values())
    for (auto& v : t.data()) v += d(rng);
}

}  // namespace

void append_composite_cases(std::vector<GradCase>& cases) {
  cases.push_back(composite("linear", [](std::mt19937_64& rng) {
    const std::size_t m = pick(rng, 1, 6), in = pick(rng, 1, 5), out = pick(rng, 1, 5);
    ParamStore<double> store;
    const Dense layer = Dense::create(store, "lin", in, out, rng);
    jitter(store, rng);
    return with_params(random_tensor({m, in}, rng), store, [layer](const Bound<double>& p, const V& x) { return layer(p, x); });
  }));

  cases.push_back(composite("gelu_chain", [](std::mt19937_64& rng) {
    const std::size_t m = pick(rng, 1, 6), in = pick(rng, 1, 4), hidden = pick(rng, 2, 6), out = pick(rng, 1, 3);
    ParamStore<double> store;
    const Dense a = Dense::create(store, "a", in, hidden, rng), b = Dense::create(store, "b", hidden, hidden, rng),
                c = Dense::create(store, "c", hidden, out, rng);
    jitter(store, rng);
    return with_params(random_tensor({m, in}, rng), store, [=](const Bound<double>& p, const V& x) {
      return c(p, activate(b(p, activate(a(p, x), Activation::gelu)), Activation::gelu));
    });
  }));

  cases.push_back(composite("galerkin_attention", [](std::mt19937_64& rng) {
    const std::size_t m = pick(rng, 2, 8), heads = pick(rng, 1, 2), width = heads * pick(rng, 1, 3);
    ParamStore<double> store;
    const AttentionLayout layout = make_attention(store, "attn", width, heads, rng);
    return with_params(random_tensor({m, width}, rng), store,
                       [layout](const Bound<double>& p, const V& h) { return galerkin_attention(p, layout, h); });
  }));

  cases.push_back(composite("sampler_render", [](std::mt19937_64& rng) {
    const std::size_t c = pick(rng, 1, 3), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
    const std::size_t ty = pick(rng, 2, 9), tx = pick(rng, 2, 9);
    return with_params(random_tensor({1, c, h, w}, rng), ParamStore<double>{}, [=](const Bound<double>&, const V& z) {
      const FeatureMap<double> map{z, Box{}};
      return render(map, plan_grid(geometry(map), ty, tx));
    });
  }));

  cases.push_back(composite("encoder", [](std::mt19937_64& rng) {
    const EncoderConfig cfg{.in_channels = 1, .channels = 3, .blocks = 1, .ratio = 2, .activation = Activation::gelu};
    ParamStore<double> store;
    const Encoder enc = Encoder::create(store, cfg, rng);
    jitter(store, rng);
    return with_params(random_tensor({1, 1, 4, 4}, rng), store,
                       [enc](const Bound<double>& p, const V& x) { return enc.encode(p, x).z; });
  }));

  cases.push_back(composite("decoder", [](std::mt19937_64& rng) {
    DecoderConfig cfg;
    cfg.in_features = 4 * 2 + kEnsembleExtras;
    cfg.hierarchy = {.levels = 2, .width = 8, .blocks = 1, .heads = 2, .ffn_mult = 2};
    ParamStore<double> store;
    const Decoder dec = Decoder::create(store, cfg, rng);
    jitter(store, rng);
    return with_params(random_tensor({144, cfg.in_features}, rng), store,
                       [dec](const Bound<double>& p, const V& z) { return dec.decode(p, z, 12, 12); });
  }));

  cases.push_back(composite("pipeline", [](std::mt19937_64& rng) {
    ModelConfig cfg;
    cfg.encoder = {.in_channels = 1, .channels = 2, .blocks = 1, .ratio = 2, .activation = Activation::gelu};
    cfg.decoder.hierarchy = {.levels = 2, .width = 8, .blocks = 1, .heads = 2, .ffn_mult = 2};
    cfg.residual = true;
    const Model model = Model::create(cfg, rng());
    ParamStore<double> store = model.params().cast<double>();
    jitter(store, rng);
    const Tensor<double> lr = random_tensor({1, 6, 6}, rng);
    return with_params(Tensor<double>::scalar(0.0), store, [model, lr](const Bound<double>& p, const V&) {
      return model.forward(p, lr, 12, 12);
    });
  }));
}

}  // namespace fsr
