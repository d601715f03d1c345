#pragma once

#include <random>
#include <string>

#include "fsr/params.hpp"

namespace fsr {

/// Row-wise affine map x W + b on (m, in) token matrices.
struct Dense {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0;
  bool has_bias = true;

  /// Glorot-uniform weight scaled by `gain`, zero bias.
  template <typename T>
  static Dense create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, double gain = 1.0, bool has_bias = true) {
    Dense d;
    d.in = in;
    d.out = out;
    d.has_bias = has_bias;
    d.weight = store.glorot(name + ".w", {in, out}, in, out, rng);
    if (gain != 1.0)
      for (auto& v : store.value(d.weight).data()) v = T(double(v) * gain);
    if (has_bias) d.bias = store.zeros(name + ".b", {out});
    return d;
  }

  template <typename T>
  Var<T> operator()(const Bound<T>& p, const Var<T>& x) const {
    const Var<T> y = matmul(x, p[weight]);
    return has_bias ? add_bias(y, p[bias]) : y;
  }
};

/// (m, d) tokens -> (d, ny, nx) field and back; tokens are row-major grid points.
template <typename T>
Var<T> tokens_to_field(const Var<T>& tokens, std::size_t ny, std::size_t nx) {
  const std::size_t d = tokens.shape()[1];
  return reshape(transpose(tokens), Shape{d, ny, nx});
}

template <typename T>
Var<T> field_to_tokens(const Var<T>& field) {
  const Shape& s = field.shape();
  const std::size_t r = s.size();
  const std::size_t m = s[r - 2] * s[r - 1];
  return transpose(reshape(field, Shape{shape_size(s) / m, m}));
}

}  // namespace fsr
