#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "devgan/tensor.hpp"

namespace devgan {

// c[i,j] = sum_k a[i,k] * b[k,j], accumulated in float in ascending k.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b for a[p x m], b[p x n], accumulated in double then rounded once.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T for a[m x k], b[n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

enum class Padding { same, valid };

struct Stride2 {
  std::size_t h = 1;
  std::size_t w = 1;

  friend bool operator==(const Stride2&, const Stride2&) = default;
};

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w;
  std::size_t kernel_h, kernel_w;
  std::size_t pad_top, pad_left;
  Stride2 stride;
};

// Output size and padding for one spatial configuration. `same` pads
// floor(total/2) before and the rest after.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h, std::size_t kernel_w,
                           Padding padding, Stride2 stride);

// NHWC cross-correlation. kernels are [kh, kw, cin, cout].
Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding, Stride2 stride = {});

struct Conv2dGrads {
  Tensor d_input;
  Tensor d_kernels;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& d_output, Padding padding,
                            Stride2 stride = {});

struct PoolResult {
  Tensor output;
  // Flat index into the input for every output element.
  std::vector<std::size_t> argmax;
};

// NHWC max pooling over valid windows. Ties go to the first element in
// row-major window order.
PoolResult maxpool2d(const Tensor& input, Stride2 size, Stride2 strides);

// Routes each output gradient to its recorded argmax.
Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& d_output);

// Central-difference gradient of a scalar function. Throws NumericError if f
// returns a non-finite value.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float eps);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-6)
double max_relative_error(const Tensor& a, const Tensor& b);

}  // namespace devgan
