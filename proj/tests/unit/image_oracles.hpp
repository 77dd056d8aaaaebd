#pragma once

#include <array>
#include <cstdint>

#include "devgan/image.hpp"
#include "devgan/rng.hpp"

namespace devgan::testing {

inline GrayImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

inline GrayImage random_binary(std::size_t w, std::size_t h, std::uint64_t seed, double density = 0.5) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& p : img.pixels) p = rng.uniform() < density ? 255 : 0;
  return img;
}

// Exhaustive search with exact rational comparison:
// sigma_b^2(t) * N^2 = (n1*S0 - n0*S1)^2 / (n0*n1).
inline int brute_force_otsu(const GrayImage& img) {
  std::array<long long, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  const long long n = static_cast<long long>(img.pixels.size());
  long long total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += v * hist[v];
  int best_t = -1;
  __int128 best_num = 0, best_den = 1;
  long long n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += t * hist[t];
    const long long n1 = n - n0, s1 = total_sum - s0;
    __int128 num = 0, den = 1;
    if (n0 > 0 && n1 > 0) {
      const __int128 diff = static_cast<__int128>(n1) * s0 - static_cast<__int128>(n0) * s1;
      num = diff * diff;
      den = static_cast<__int128>(n0) * n1;
    }
    if (best_t < 0 || num * best_den > best_num * den) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }
  // No t splits the histogram: the image is single-valued.
  if (best_num == 0) {
    for (int v = 0; v < 256; ++v)
      if (hist[v]) return v;
  }
  return best_t;
}

}  // namespace devgan::testing
