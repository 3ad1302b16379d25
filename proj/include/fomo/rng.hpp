#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fomo {

using Rng = std::mt19937_64;

/// Mixes a base seed with a label and up to two integer coordinates into a
/// new 64-bit seed. Distinct labels give statistically independent streams.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t base, std::string_view label,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(base, label, a, b));
}

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1).
double uniform01(Rng& rng);

/// Standard normal draw.
double standard_normal(Rng& rng);

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Returns a uniformly random permutation of 0..n-1.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace fomo
