#include "fsr/attention.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace fsr {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const Mat<T>> view(const Tensor<T>& t) {
  return {t.ptr(), Eigen::Index(t.dim(0)), Eigen::Index(t.dim(1))};
}

template <typename T>
Tensor<T> from(const Mat<T>& m) {
  Tensor<T> out(Shape{std::size_t(m.rows()), std::size_t(m.cols())});
  Eigen::Map<Mat<T>>(out.ptr(), m.rows(), m.cols()) = m;
  return out;
}

void require_matrix(const char* op, const Tensor<double>& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <typename T>
void softmax_inplace(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

template <typename T>
AttentionLayout make_attention(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads,
                               std::mt19937_64& rng, double out_gain) {
  if (heads == 0 || width % heads != 0) {
    throw Error("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(width));
  }
  AttentionLayout a;
  a.width = width;
  a.heads = heads;
  a.wq = store.glorot(name + ".wq", {width, width}, width, width, rng);
  a.wk = store.glorot(name + ".wk", {width, width}, width, width, rng);
  a.wv = store.glorot(name + ".wv", {width, width}, width, width, rng);
  a.wo = store.glorot(name + ".wo", {width, width}, width, width, rng);
  if (out_gain != 1.0)
    for (auto& v : store.value(a.wo).data()) v = T(double(v) * out_gain);
  return a;
}

template <typename T>
Var<T> galerkin_kernel(const Var<T>& q, const Var<T>& k_hat, const Var<T>& v_hat) {
  const std::size_t m = q.shape()[0];
  return scale(matmul(q, matmul(transpose(k_hat), v_hat)), T(1.0 / double(m)));
}

template <typename T>
Var<T> galerkin_attention(const Bound<T>& p, const AttentionLayout& a, const Var<T>& h) {
  if (h.shape().size() != 2 || h.shape()[1] != a.width) {
    throw ShapeError("galerkin_attention: expected (m, " + std::to_string(a.width) + ") tokens, got " +
                     shape_string(h.shape()));
  }
  const Var<T> q = matmul(h, p[a.wq]);
  // Standardizing whole columns equals standardizing each head's slice of them.
  const Var<T> k = column_standardize(matmul(h, p[a.wk]));
  const Var<T> v = column_standardize(matmul(h, p[a.wv]));
  Var<T> z;
  if (a.heads == 1) {
    z = galerkin_kernel(q, k, v);
  } else {
    const std::size_t dh = a.head_width();
    std::vector<Var<T>> parts;
    for (std::size_t i = 0; i < a.heads; ++i) {
      parts.push_back(galerkin_kernel(slice(q, 1, i * dh, dh), slice(k, 1, i * dh, dh), slice(v, 1, i * dh, dh)));
    }
    z = concat(parts, 1);
  }
  return matmul(z, p[a.wo]);
}

Tensor<double> brute_force_kernel_sum(const Tensor<double>& q, const Tensor<double>& k_hat, const Tensor<double>& v_hat) {
  require_matrix("brute_force_kernel_sum", q);
  if (k_hat.shape() != q.shape()) shape_error("brute_force_kernel_sum", q.shape(), k_hat.shape());
  require_matrix("brute_force_kernel_sum", v_hat);
  if (v_hat.dim(0) != q.dim(0)) shape_error("brute_force_kernel_sum", q.shape(), v_hat.shape());
  const std::size_t m = q.dim(0), d = q.dim(1), dv = v_hat.dim(1);
  Tensor<double> out(Shape{m, dv});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < dv; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < d; ++l)
        for (std::size_t t = 0; t < m; ++t) acc += q(i, l) * k_hat(t, l) * v_hat(t, j) / double(m);
      out(i, j) = acc;
    }
  return out;
}

Tensor<double> softmax_rows(const Tensor<double>& scores) {
  require_matrix("softmax_rows", scores);
  Mat<double> s = view(scores);
  softmax_inplace(s);
  return from<double>(s);
}

template <typename T>
Tensor<T> vanilla_kernel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.shape() != k.shape()) shape_error("vanilla_kernel", q.shape(), k.shape());
  if (v.dim(0) != q.dim(0)) shape_error("vanilla_kernel", q.shape(), v.shape());
  // Row tiles keep the score block cache-resident; each row's softmax only needs its own row.
  constexpr Eigen::Index kTile = 128;
  const Eigen::Index m = Eigen::Index(q.dim(0));
  const T scale = T(1.0 / std::sqrt(double(q.dim(1))));
  Mat<T> out(m, Eigen::Index(v.dim(1)));
  for (Eigen::Index r = 0; r < m; r += kTile) {
    const Eigen::Index n = std::min(kTile, m - r);
    Mat<T> s = view(q).middleRows(r, n) * view(k).transpose();
    s *= scale;
    softmax_inplace(s);
    out.middleRows(r, n) = s * view(v);
  }
  return from<T>(out);
}

template <typename T>
Tensor<T> vanilla_attention(const Tensor<T>& h, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            const Tensor<T>& wo, std::size_t heads) {
  const std::size_t d = wq.dim(1);
  if (heads == 0 || d % heads != 0) throw Error("vanilla_attention: heads must divide width");
  const Mat<T> q = view(h) * view(wq), k = view(h) * view(wk), v = view(h) * view(wv);
  const std::size_t dh = d / heads;
  Mat<T> z(q.rows(), q.cols());
  for (std::size_t i = 0; i < heads; ++i) {
    const auto cols = Eigen::seqN(Eigen::Index(i * dh), Eigen::Index(dh));
    const Tensor<T> out = vanilla_kernel(from<T>(q(Eigen::all, cols)), from<T>(k(Eigen::all, cols)), from<T>(v(Eigen::all, cols)));
    z(Eigen::all, cols) = view(out);
  }
  return from<T>(z * view(wo));
}

double galerkin_flops(std::size_t m, std::size_t d) { return 2.0 * double(m) * double(d) * double(d) * (3.0 + 2.0); }

double vanilla_flops(std::size_t m, std::size_t d) {
  return 2.0 * double(m) * double(d) * double(d) * 3.0 + 2.0 * double(m) * double(m) * double(d) * 2.0;
}

std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& sizes, std::size_t d, std::size_t heads,
                                      std::size_t reps, std::uint64_t seed, bool include_vanilla) {
  if (reps == 0) throw Error("bench_attention: reps must be positive");
  using Clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(seed);
  ParamStore<float> store;
  const AttentionLayout layout = make_attention(store, "attn", d, heads, rng);
  const std::size_t params = store.scalar_count();
  for (std::size_t m : sizes) {
    Tensor<float> h(Shape{m, d});
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (float& x : h.data()) x = u(rng);

    std::vector<double> times;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto t0 = Clock::now();
      Tape<float> tape;
      const Bound<float> p(tape, store, false);
      const Var<float> out = galerkin_attention(p, layout, tape.constant(h));
      volatile float sink = out.value()[0];
      (void)sink;
      times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    rows.push_back({"galerkin", m, d, heads, params, galerkin_flops(m, d), median(times)});

    if (!include_vanilla) continue;
    times.clear();
    for (std::size_t r = 0; r < reps; ++r) {
      const auto t0 = Clock::now();
      const Tensor<float> out = vanilla_attention(h, store.value(layout.wq), store.value(layout.wk),
                                                  store.value(layout.wv), store.value(layout.wo), heads);
      volatile float sink = out[0];
      (void)sink;
      times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    rows.push_back({"vanilla", m, d, heads, params, vanilla_flops(m, d), median(times)});
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows, bool include_timing) {
  out << "variant,m,d,heads,params,flops,median_seconds\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.m << ',' << r.d << ',' << r.heads << ',' << r.params << ',' << std::fixed
        << r.flops << std::defaultfloat << ',';
    if (include_timing) out << r.median_seconds;
    out << '\n';
  }
}

double loglog_slope(const std::vector<BenchRow>& rows, const std::string& variant) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    const double x = std::log(double(r.m)), y = std::log(r.median_seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  if (n < 2) throw Error("loglog_slope: need at least two sizes for '" + variant + "'");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

#define FSR_INSTANTIATE(T)                                                                                         \
  template AttentionLayout make_attention<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,         \
                                             std::mt19937_64&, double);                                            \
  template Var<T> galerkin_kernel<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> galerkin_attention<T>(const Bound<T>&, const AttentionLayout&, const Var<T>&);                   \
  template Tensor<T> vanilla_kernel<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> vanilla_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, std::size_t);
FSR_INSTANTIATE(float)
FSR_INSTANTIATE(double)
#undef FSR_INSTANTIATE

}  // namespace fsr
