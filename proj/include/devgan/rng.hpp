#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "devgan/tensor.hpp"

namespace devgan {

// Deterministic random source.
//
// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
// standard. Everything built on top of the raw bits (uniforms, indices,
// normals) is implemented here rather than through <random> distributions,
// whose algorithms vary between standard libraries. Normals use the
// Box-Muller transform and cache the second value of each pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  double normal();

  // Seed for an independent stream labelled by (seed, stream). Uses the
  // splitmix64 finalizer so nearby labels give unrelated seeds.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

// i.i.d. standard-normal entries.
Tensor sample_gaussian(Rng& rng, const Shape& shape);

// i.i.d. uniform entries in [lo, hi).
Tensor sample_uniform(Rng& rng, const Shape& shape, float lo, float hi);

}  // namespace devgan
