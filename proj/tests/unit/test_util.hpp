#pragma once

#include <cstdint>

#include "devgan/rng.hpp"
#include "devgan/tensor.hpp"

namespace devgan::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, float lo = -2.0f, float hi = 2.0f) {
  Rng rng(seed);
  return sample_uniform(rng, shape, lo, hi);
}

// sum_i w_i * y_i in double: a scalar probe whose gradient w.r.t. y is w.
inline double weighted_sum(const Tensor& y, const Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(y[i]) * w[i];
  return acc;
}

}  // namespace devgan::testing
