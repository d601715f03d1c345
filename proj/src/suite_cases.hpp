#pragma once

#include <random>
#include <vector>

#include "fsr/grad_check.hpp"

namespace fsr {

/// Entries uniform in [-1, 1].
inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Entries with magnitude in [0.1, 1] and random sign, clear of kinks at zero.
inline Tensor<double> random_away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// Composite checks over the model modules, appended after the per-op cases.
void append_composite_cases(std::vector<GradCase>& cases);

}  // namespace fsr
