// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded sampling helpers with a fixed algorithm, so that splits and pair
// lists written to disk are reproducible across standard-library versions
// (std::shuffle and std::uniform_int_distribution are implementation-defined).

#pragma once

#include <cstdint>
#include <iterator>
#include <random>
#include <utility>

namespace sigverify {

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Uniform double in [lo, hi) from the top 53 bits of one draw.
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

/// Fisher-Yates shuffle.
template <typename Range>
void shuffle(Range& range, std::mt19937_64& rng) {
  auto first = std::begin(range);
  const auto n = static_cast<std::uint64_t>(std::distance(first, std::end(range)));
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = uniform_index(rng, i);
    using std::swap;
    swap(*(first + (i - 1)), *(first + j));
  }
}

}  // namespace sigverify
