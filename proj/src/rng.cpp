#include "devgan/rng.hpp"

#include <cmath>
#include <numbers>

#include "devgan/errors.hpp"

namespace devgan {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ContractError("Rng::index requires n > 0");
  // Rejection sampling keeps the result unbiased for every n.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor sample_gaussian(Rng& rng, const Shape& shape) {
  Tensor out(shape);
  for (auto& v : out.data()) v = static_cast<float>(rng.normal());
  return out;
}

Tensor sample_uniform(Rng& rng, const Shape& shape, float lo, float hi) {
  Tensor out(shape);
  for (auto& v : out.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return out;
}

}  // namespace devgan
