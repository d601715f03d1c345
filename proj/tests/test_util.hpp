#pragma once

#include <cmath>
#include <cstring>
#include <random>

#include "fsr/tensor.hpp"

namespace test {

inline fsr::Tensor<double> random_tensor(const fsr::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  fsr::Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const fsr::Tensor<double>& a, const fsr::Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const fsr::Tensor<double>& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double dot(const fsr::Tensor<double>& a, const fsr::Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool bitwise_equal(const fsr::Tensor<double>& a, const fsr::Tensor<double>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) == 0;
}

}  // namespace test
