#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fsr {

/// Generator seeded from a tuple of integers (e.g. seed, split, index), so every stream is a
/// pure function of its coordinates.
inline std::mt19937_64 derived_rng(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(std::uint32_t(p));
    words.push_back(std::uint32_t(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace fsr
