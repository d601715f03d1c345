#pragma once

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "fsr/params.hpp"

namespace fsr {

/// W_Q, W_K, W_V and the output projection W_O, all (d x d) without bias.
struct AttentionLayout {
  std::size_t wq = 0, wk = 0, wv = 0, wo = 0;
  std::size_t width = 0, heads = 1;

  std::size_t head_width() const { return width / heads; }
};

/// Throws when `heads` does not divide `width`. W_O is scaled by `out_gain`.
template <typename T>
AttentionLayout make_attention(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads,
                               std::mt19937_64& rng, double out_gain = 1.0);

/// (1/m) Q (K^T V) with the K^T V product formed first, so no m x m matrix appears.
template <typename T>
Var<T> galerkin_kernel(const Var<T>& q, const Var<T>& k_hat, const Var<T>& v_hat);

/// Linear attention on (m, d) tokens: K and V are column-standardized, each head applies
/// galerkin_kernel to its column slice, heads are concatenated and projected by W_O.
template <typename T>
Var<T> galerkin_attention(const Bound<T>& p, const AttentionLayout& layout, const Var<T>& h);

/// Direct evaluation of h[i][j] = sum_l sum_t q[i][l] k[t][l] v[t][j] / m, one term at a time.
Tensor<double> brute_force_kernel_sum(const Tensor<double>& q, const Tensor<double>& k_hat, const Tensor<double>& v_hat);

/// Row-wise softmax.
Tensor<double> softmax_rows(const Tensor<double>& scores);

/// softmax(Q K^T / sqrt(d)) V, materializing the m x m score matrix.
template <typename T>
Tensor<T> vanilla_kernel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

/// Softmax attention with the same projections and head split as galerkin_attention.
template <typename T>
Tensor<T> vanilla_attention(const Tensor<T>& h, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            const Tensor<T>& wo, std::size_t heads);

struct BenchRow {
  std::string variant;
  std::size_t m = 0, d = 0, heads = 0, params = 0;
  double flops = 0.0;
  double median_seconds = 0.0;
};

/// 2 m d^2 (3 projections + 2 kernel products).
double galerkin_flops(std::size_t m, std::size_t d);
/// 2 m d^2 * 3 projections + 2 m^2 d * 2 (scores and weighted sum).
double vanilla_flops(std::size_t m, std::size_t d);

/// Median wall-clock of `reps` forward passes per size and variant, 32-bit.
std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& sizes, std::size_t d, std::size_t heads,
                                      std::size_t reps, std::uint64_t seed, bool include_vanilla = true);

/// `variant,m,d,heads,params,flops,median_seconds`.
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows, bool include_timing = true);

/// Least-squares slope of log(seconds) against log(m) for one variant.
double loglog_slope(const std::vector<BenchRow>& rows, const std::string& variant);

}  // namespace fsr
