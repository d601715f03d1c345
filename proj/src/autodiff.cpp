#include "fsr/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <numbers>

#include "fsr/spectral.hpp"

namespace fsr {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
void require_same(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

template <typename T>
void require_matrix(const char* op, const Var<T>& a) {
  if (a.value().rank() != 2) throw ShapeError(std::string(op) + ": expected matrix, got " + shape_string(a.shape()));
}

template <typename T, typename F>
Tensor<T> map_values(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;
constexpr double kLeakySlope = 0.01;

template <typename T>
T activation_value(T x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x > T(0) ? x : T(0);
    case Activation::gelu:
      return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    case Activation::leaky_relu:
      return x > T(0) ? x : T(kLeakySlope) * x;
    case Activation::elu:
      return x > T(0) ? x : std::expm1(x);
    case Activation::selu:
      return T(kSeluLambda) * (x > T(0) ? x : T(kSeluAlpha) * std::expm1(x));
  }
  return x;
}

// Shared body of row- and column-wise standardization. `stride_in` walks within a group,
// `stride_group` between groups.
template <typename T>
void standardize(const T* x, T* y, T* inv_sigma, std::size_t groups, std::size_t len, std::size_t stride_group,
                 std::size_t stride_in, T eps) {
  for (std::size_t g = 0; g < groups; ++g) {
    const T* xg = x + g * stride_group;
    T* yg = y + g * stride_group;
    T mu = 0;
    for (std::size_t i = 0; i < len; ++i) mu += xg[i * stride_in];
    mu /= T(len);
    T var = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const T d = xg[i * stride_in] - mu;
      var += d * d;
    }
    var /= T(len);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_sigma[g] = inv;
    for (std::size_t i = 0; i < len; ++i) yg[i * stride_in] = (xg[i * stride_in] - mu) * inv;
  }
}

// dx = (g - mean(g) - y * mean(g * y)) / sigma
template <typename T>
void standardize_backward(const T* g, const T* y, const T* inv_sigma, T* dx, std::size_t groups, std::size_t len,
                          std::size_t stride_group, std::size_t stride_in) {
  for (std::size_t k = 0; k < groups; ++k) {
    const std::size_t base = k * stride_group;
    T mg = 0, mgy = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t j = base + i * stride_in;
      mg += g[j];
      mgy += g[j] * y[j];
    }
    mg /= T(len);
    mgy /= T(len);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t j = base + i * stride_in;
      dx[j] += (g[j] - mg - y[j] * mgy) * inv_sigma[k];
    }
  }
}

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw;
  std::size_t hw() const { return h * w; }
  std::size_t patch() const { return cin * kh * kw; }
};

// cols[(c*kh + dy)*kw + dx, y*w + x] = in[c, y + dy - rh, x + dx - rw], zero outside.
template <typename T>
void im2col(const T* in, T* cols, const ConvGeometry& g) {
  const long rh = long(g.kh / 2), rw = long(g.kw / 2);
  const long h = long(g.h), w = long(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = in + c * g.hw();
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx) {
        T* row = cols + ((c * g.kh + dy) * g.kw + dx) * g.hw();
        const long oy = long(dy) - rh, ox = long(dx) - rw;
        for (long y = 0; y < h; ++y) {
          const long sy = y + oy;
          T* dst = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          for (long x = 0; x < w; ++x) {
            const long sx = x + ox;
            dst[x] = (sx >= 0 && sx < w) ? src[sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, T* out, const ConvGeometry& g) {
  const long rh = long(g.kh / 2), rw = long(g.kw / 2);
  const long h = long(g.h), w = long(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = out + c * g.hw();
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx) {
        const T* row = cols + ((c * g.kh + dy) * g.kw + dx) * g.hw();
        const long oy = long(dy) - rh, ox = long(dx) - rw;
        for (long y = 0; y < h; ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + y * w;
          T* dst = plane + sy * w;
          for (long x = 0; x < w; ++x) {
            const long sx = x + ox;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "leaky_relu" || name == "leaky-relu") return Activation::leaky_relu;
  if (name == "elu") return Activation::elu;
  if (name == "selu") return Activation::selu;
  throw Error("unknown activation '" + std::string(name) + "' (expected relu, gelu, leaky_relu, elu, selu)");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::elu: return "elu";
    case Activation::selu: return "selu";
  }
  return "?";
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind) {
  return map_values(x, [kind](T v) { return activation_value(v, kind); });
}

template <typename T>
T activation_derivative(T x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x > T(0) ? T(1) : T(0);
    case Activation::gelu: {
      const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
      const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      return cdf + x * pdf;
    }
    case Activation::leaky_relu:
      return x > T(0) ? T(1) : T(kLeakySlope);
    case Activation::elu:
      return x > T(0) ? T(1) : std::exp(x);
    case Activation::selu:
      return T(kSeluLambda) * (x > T(0) ? T(1) : T(kSeluAlpha) * std::exp(x));
  }
  return T(1);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same("add", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same("sub", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, map_values(g, [](T v) { return -v; }));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same("mul", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T>& da = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& db = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  const auto ia = a.id();
  return a.tape().record("scale", map_values(a.value(), [s](T v) { return s * v; }), {a},
                         [ia, s](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& da = t.grad_slot(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
                         });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  const auto ia = a.id();
  return a.tape().record("abs", map_values(a.value(), [](T v) { return std::abs(v); }), {a},
                         [ia](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& x = t.value(ia);
                           Tensor<T>& da = t.grad_slot(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
                             da[i] += s * g[i];
                           }
                         });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  const auto ia = a.id();
  const auto io = a.tape().size();  // id the result will receive
  return a.tape().record("exp", map_values(a.value(), [](T v) { return std::exp(v); }), {a},
                         [ia, io](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& y = t.value(io);
                           Tensor<T>& da = t.grad_slot(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += y[i] * g[i];
                         });
}

template <typename T>
Var<T> activate(const Var<T>& a, Activation kind) {
  const auto ia = a.id();
  return a.tape().record("activation", activation_forward(a.value(), kind), {a},
                         [ia, kind](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& x = t.value(ia);
                           Tensor<T>& da = t.grad_slot(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += activation_derivative(x[i], kind) * g[i];
                         });
}

template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& bias) {
  require_matrix("add_bias", a);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  if (bias.value().size() != n) shape_error("add_bias", a.shape(), bias.shape());
  Tensor<T> out = a.value();
  const T* b = bias.value().ptr();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  const auto ia = a.id(), ib = bias.id();
  return a.tape().record("add_bias", std::move(out), {a, bias}, [ia, ib, m, n](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& db = t.grad_slot(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  Tensor<T> out(Shape{m, n});
  MapR<T>(out.ptr(), long(m), long(n)).noalias() =
      CMapR<T>(a.value().ptr(), long(m), long(k)) * CMapR<T>(b.value().ptr(), long(k), long(n));
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    CMapR<T> G(g.ptr(), long(m), long(n));
    if (t.requires_grad(ia)) {
      MapR<T>(t.grad_slot(ia).ptr(), long(m), long(k)).noalias() +=
          G * CMapR<T>(t.value(ib).ptr(), long(k), long(n)).transpose();
    }
    if (t.requires_grad(ib)) {
      MapR<T>(t.grad_slot(ib).ptr(), long(k), long(n)).noalias() +=
          CMapR<T>(t.value(ia).ptr(), long(m), long(k)).transpose() * G;
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  Tensor<T> out(Shape{n, m});
  MapR<T>(out.ptr(), long(n), long(m)) = CMapR<T>(a.value().ptr(), long(m), long(n)).transpose();
  const auto ia = a.id();
  return a.tape().record("transpose", std::move(out), {a}, [ia, m, n](Tape<T>& t, const Tensor<T>& g) {
    MapR<T>(t.grad_slot(ia).ptr(), long(m), long(n)) += CMapR<T>(g.ptr(), long(n), long(m)).transpose();
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  const auto ia = a.id();
  return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a},
                         [ia](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& da = t.grad_slot(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                         });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d]) shape_error("concat", s0, s);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  const std::size_t row = out_shape[axis] * inner;
  Tensor<T> out(out_shape);
  std::vector<std::size_t> ids, widths, offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * inner;
    const T* src = p.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * width, width, out.ptr() + o * row + offset);
    ids.push_back(p.id());
    widths.push_back(width);
    offsets.push_back(offset);
    offset += width;
  }
  return parts[0].tape().record("concat", std::move(out), parts,
                                [ids, widths, offsets, outer, row](Tape<T>& t, const Tensor<T>& g) {
                                  for (std::size_t i = 0; i < ids.size(); ++i) {
                                    if (!t.requires_grad(ids[i])) continue;
                                    T* dst = t.grad_slot(ids[i]).ptr();
                                    for (std::size_t o = 0; o < outer; ++o) {
                                      const T* src = g.ptr() + o * row + offsets[i];
                                      T* d = dst + o * widths[i];
                                      for (std::size_t j = 0; j < widths[i]; ++j) d[j] += src[j];
                                    }
                                  }
                                });
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis] || length == 0) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t row = s[axis] * inner, width = length * inner, offset = start * inner;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(a.value().ptr() + o * row + offset, width, out.ptr() + o * width);
  const auto ia = a.id();
  return a.tape().record("slice", std::move(out), {a}, [ia, outer, row, width, offset](Tape<T>& t, const Tensor<T>& g) {
    T* dst = t.grad_slot(ia).ptr();
    for (std::size_t o = 0; o < outer; ++o) {
      T* d = dst + o * row + offset;
      const T* src = g.ptr() + o * width;
      for (std::size_t j = 0; j < width; ++j) d[j] += src[j];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  const auto ia = a.id();
  return a.tape().record("sum", Tensor<T>::scalar(a.value().sum()), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& da = t.grad_slot(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const auto ia = a.id();
  const T n = T(a.value().size());
  return a.tape().record("mean", Tensor<T>::scalar(a.value().sum() / n), {a}, [ia, n](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& da = t.grad_slot(ia);
    const T v = g[0] / n;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += v;
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] % 2 == 0 || ws[3] % 2 == 0) {
    shape_error("conv2d", xs, ws);
  }
  if (bias.valid() && bias.value().size() != ws[0]) shape_error("conv2d", ws, bias.shape());
  const ConvGeometry geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3]};
  const bool pointwise = geo.kh == 1 && geo.kw == 1;
  auto cols = std::make_shared<std::vector<T>>(pointwise ? 0 : geo.batch * geo.patch() * geo.hw());
  Tensor<T> out(Shape{geo.batch, geo.cout, geo.h, geo.w});
  CMapR<T> W(weight.value().ptr(), long(geo.cout), long(geo.patch()));
  for (std::size_t b = 0; b < geo.batch; ++b) {
    const T* in = x.value().ptr() + b * geo.cin * geo.hw();
    const T* col = in;
    if (!pointwise) {
      T* c = cols->data() + b * geo.patch() * geo.hw();
      im2col(in, c, geo);
      col = c;
    }
    MapR<T> O(out.ptr() + b * geo.cout * geo.hw(), long(geo.cout), long(geo.hw()));
    O.noalias() = W * CMapR<T>(col, long(geo.patch()), long(geo.hw()));
    if (bias.valid()) {
      const T* bv = bias.value().ptr();
      for (std::size_t o = 0; o < geo.cout; ++o) O.row(long(o)).array() += bv[o];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  const auto ix = x.id(), iw = weight.id();
  const bool has_bias = bias.valid();
  const auto ib = has_bias ? bias.id() : 0;
  return x.tape().record("conv2d", std::move(out), inputs,
                         [ix, iw, ib, has_bias, geo, pointwise, cols](Tape<T>& t, const Tensor<T>& g) {
                           const long P = long(geo.patch()), HW = long(geo.hw()), O = long(geo.cout);
                           const T* xv = t.value(ix).ptr();
                           std::vector<T> dcol(pointwise ? 0 : geo.patch() * geo.hw());
                           for (std::size_t b = 0; b < geo.batch; ++b) {
                             CMapR<T> G(g.ptr() + b * geo.cout * geo.hw(), O, HW);
                             const T* col = pointwise ? xv + b * geo.cin * geo.hw() : cols->data() + b * P * HW;
                             if (t.requires_grad(iw)) {
                               MapR<T>(t.grad_slot(iw).ptr(), O, P).noalias() +=
                                   G * CMapR<T>(col, P, HW).transpose();
                             }
                             if (has_bias && t.requires_grad(ib)) {
                               T* db = t.grad_slot(ib).ptr();
                               for (long o = 0; o < O; ++o) db[o] += G.row(o).sum();
                             }
                             if (t.requires_grad(ix)) {
                               CMapR<T> W(t.value(iw).ptr(), O, P);
                               T* dx = t.grad_slot(ix).ptr() + b * geo.cin * geo.hw();
                               if (pointwise) {
                                 MapR<T>(dx, P, HW).noalias() += W.transpose() * G;
                               } else {
                                 MapR<T>(dcol.data(), P, HW).noalias() = W.transpose() * G;
                                 col2im(dcol.data(), dx, geo);
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> layer_stat_normalize(const Var<T>& a, T eps) {
  require_matrix("layer_stat_normalize", a);
  const std::size_t m = a.value().dim(0), d = a.value().dim(1);
  Tensor<T> out(a.shape());
  auto inv = std::make_shared<std::vector<T>>(m);
  standardize(a.value().ptr(), out.ptr(), inv->data(), m, d, d, std::size_t{1}, eps);
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().record("layer_stat_normalize", std::move(out), {a}, [ia, iy, inv, m, d](Tape<T>& t, const Tensor<T>& g) {
    standardize_backward(g.ptr(), t.value(iy).ptr(), inv->data(), t.grad_slot(ia).ptr(), m, d, d, std::size_t{1});
  });
}

template <typename T>
Var<T> column_standardize(const Var<T>& a, T eps) {
  require_matrix("column_standardize", a);
  const std::size_t m = a.value().dim(0), d = a.value().dim(1);
  Tensor<T> out(a.shape());
  auto inv = std::make_shared<std::vector<T>>(d);
  standardize(a.value().ptr(), out.ptr(), inv->data(), d, m, std::size_t{1}, d, eps);
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().record("column_standardize", std::move(out), {a}, [ia, iy, inv, m, d](Tape<T>& t, const Tensor<T>& g) {
    standardize_backward(g.ptr(), t.value(iy).ptr(), inv->data(), t.grad_slot(ia).ptr(), d, m, std::size_t{1}, d);
  });
}

template <typename T>
Var<T> gather_weighted(const Var<T>& src, const std::vector<std::uint32_t>& indices, const std::vector<T>& weights,
                       std::size_t k) {
  require_matrix("gather_weighted", src);
  if (k == 0 || indices.size() % k != 0 || weights.size() != indices.size()) {
    throw ShapeError("gather_weighted: " + std::to_string(indices.size()) + " indices, " +
                     std::to_string(weights.size()) + " weights, k=" + std::to_string(k));
  }
  const std::size_t n = src.value().dim(0), d = src.value().dim(1), q = indices.size() / k;
  for (auto i : indices)
    if (i >= n) throw ShapeError("gather_weighted: index " + std::to_string(i) + " >= rows " + std::to_string(n));
  Tensor<T> out(Shape{q, k * d});
  const T* sv = src.value().ptr();
  for (std::size_t r = 0; r < q; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const T w = weights[r * k + j];
      const T* row = sv + std::size_t(indices[r * k + j]) * d;
      T* dst = out.ptr() + r * k * d + j * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] = w * row[c];
    }
  }
  const auto is = src.id();
  auto idx = std::make_shared<const std::vector<std::uint32_t>>(indices);
  auto wts = std::make_shared<const std::vector<T>>(weights);
  return src.tape().record("gather_weighted", std::move(out), {src}, [is, idx, wts, q, k, d](Tape<T>& t, const Tensor<T>& g) {
    T* ds = t.grad_slot(is).ptr();
    for (std::size_t r = 0; r < q; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const T w = (*wts)[r * k + j];
        T* row = ds + std::size_t((*idx)[r * k + j]) * d;
        const T* src_g = g.ptr() + r * k * d + j * d;
        for (std::size_t c = 0; c < d; ++c) row[c] += w * src_g[c];
      }
    }
  });
}

template <typename T>
Var<T> spectral_resize(const Var<T>& a, std::size_t ny, std::size_t nx) {
  const auto ia = a.id();
  const Shape& s = a.shape();
  if (s.size() < 2) throw ShapeError("spectral_resize: rank < 2 " + shape_string(s));
  const std::size_t sy = s[s.size() - 2], sx = s[s.size() - 1];
  return a.tape().record("spectral_resize", spectral::resize(a.value(), ny, nx), {a},
                         [ia, sy, sx](Tape<T>& t, const Tensor<T>& g) {
                           t.accumulate(ia, spectral::resize_adjoint(g, sy, sx));
                         });
}

template <typename T>
Var<T> zero_interleave(const Var<T>& a, std::size_t factor) {
  const auto ia = a.id();
  const Shape& s = a.shape();
  const std::size_t sy = s[s.size() - 2], sx = s[s.size() - 1];
  return a.tape().record("zero_interleave", spectral::zero_interleave(a.value(), factor), {a},
                         [ia, factor, sy, sx](Tape<T>& t, const Tensor<T>& g) {
                           t.accumulate(ia, spectral::decimate(g, factor, sy, sx));
                         });
}

template <typename T>
Var<T> descend(const Var<T>& a) {
  const auto ia = a.id();
  const Shape& s = a.shape();
  const std::size_t sy = s[s.size() - 2], sx = s[s.size() - 1];
  return a.tape().record("descend", spectral::antialias_downsample(a.value(), 1.0, 0.5, 2), {a},
                         [ia, sy, sx](Tape<T>& t, const Tensor<T>& g) {
                           t.accumulate(ia, spectral::antialias_downsample_adjoint(g, 2, sy, sx));
                         });
}

template <typename T>
Var<T> ascend(const Var<T>& a, std::size_t ny, std::size_t nx) {
  const auto ia = a.id();
  const Shape& s = a.shape();
  const std::size_t sy = s[s.size() - 2], sx = s[s.size() - 1];
  return a.tape().record("ascend", spectral::interp_upsample(a.value(), 2, ny, nx), {a},
                         [ia, sy, sx](Tape<T>& t, const Tensor<T>& g) {
                           t.accumulate(ia, spectral::interp_upsample_adjoint(g, 2, sy, sx));
                         });
}

#define FSR_INSTANTIATE(T)                                                                                   \
  template Tensor<T> activation_forward(const Tensor<T>&, Activation);                                       \
  template T activation_derivative(T, Activation);                                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> scale(const Var<T>&, T);                                                                   \
  template Var<T> abs(const Var<T>&);                                                                        \
  template Var<T> exp(const Var<T>&);                                                                        \
  template Var<T> activate(const Var<T>&, Activation);                                                       \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                      \
  template Var<T> transpose(const Var<T>&);                                                                  \
  template Var<T> reshape(const Var<T>&, Shape);                                                             \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                           \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                               \
  template Var<T> sum(const Var<T>&);                                                                        \
  template Var<T> mean(const Var<T>&);                                                                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&);                                       \
  template Var<T> layer_stat_normalize(const Var<T>&, T);                                                    \
  template Var<T> column_standardize(const Var<T>&, T);                                                      \
  template Var<T> gather_weighted(const Var<T>&, const std::vector<std::uint32_t>&, const std::vector<T>&, \
                                  std::size_t);                                                              \
  template Var<T> spectral_resize(const Var<T>&, std::size_t, std::size_t);                                  \
  template Var<T> zero_interleave(const Var<T>&, std::size_t);                                               \
  template Var<T> descend(const Var<T>&);                                                                    \
  template Var<T> ascend(const Var<T>&, std::size_t, std::size_t);

FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)

#undef FSR_INSTANTIATE

}  // namespace fsr
