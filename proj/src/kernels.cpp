#include "devgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "devgan/errors.hpp"

namespace devgan {
namespace {

// C[m x n] (+)= A[m x k] * B[k x n], all row-major.
//
// Four rows of A share each pass over a row of B, and columns are tiled so the
// four C row segments stay in L1. Every c[i,j] is still accumulated in
// ascending k, so the result matches the naive triple loop bit for bit.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
  constexpr std::size_t kRowBlock = 4;
  constexpr std::size_t kColBlock = 256;
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t j1 = std::min(n, j0 + kColBlock);
    const std::size_t width = j1 - j0;
    std::size_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      float* c0 = c + (i + 0) * n + j0;
      float* c1 = c + (i + 1) * n + j0;
      float* c2 = c + (i + 2) * n + j0;
      float* c3 = c + (i + 3) * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const float a0 = a[(i + 0) * k + p];
        const float a1 = a[(i + 1) * k + p];
        const float a2 = a[(i + 2) * k + p];
        const float a3 = a[(i + 3) * k + p];
        const float* brow = b + p * n + j0;
        for (std::size_t j = 0; j < width; ++j) {
          const float bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      float* crow = c + i * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = a[i * k + p];
        const float* brow = b + p * n + j0;
        for (std::size_t j = 0; j < width; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " expects a matrix, got " + shape_to_string(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.raw(), b.raw(), c.raw());
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("matmul_tn: leading dimensions differ for " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  // Weight gradients reduce over batch*positions; a double accumulator keeps
  // small entries accurate where float partial sums cancel.
  const std::size_t rows = a.dim(0), m = a.dim(1), n = b.dim(1);
  std::vector<double> acc(m * n, 0.0);
  const float* pa = a.raw();
  const float* pb = b.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* arow = pa + r * m;
    const float* brow = pb + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* out = acc.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m * n; ++i) c[i] = static_cast<float>(acc[i]);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: trailing dimensions differ for " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  return matmul(a, transpose(b));
}

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h, std::size_t kernel_w,
                           Padding padding, Stride2 stride) {
  if (stride.h == 0 || stride.w == 0) throw ContractError("conv stride must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw ShapeError("conv kernel must be non-empty");
  ConvGeometry g{in_h, in_w, 0, 0, kernel_h, kernel_w, 0, 0, stride};
  if (padding == Padding::same) {
    g.out_h = (in_h + stride.h - 1) / stride.h;
    g.out_w = (in_w + stride.w - 1) / stride.w;
    const std::size_t need_h = (g.out_h - 1) * stride.h + kernel_h;
    const std::size_t need_w = (g.out_w - 1) * stride.w + kernel_w;
    g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
    g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  } else {
    if (kernel_h > in_h || kernel_w > in_w)
      throw ShapeError("conv kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                       " larger than valid-padded input " + std::to_string(in_h) + "x" + std::to_string(in_w));
    g.out_h = (in_h - kernel_h) / stride.h + 1;
    g.out_w = (in_w - kernel_w) / stride.w + 1;
  }
  return g;
}

namespace {

struct ConvDims {
  std::size_t batch, cin, cout;
  ConvGeometry geo;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, Padding padding, Stride2 stride) {
  if (input.rank() != 4) throw ShapeError("conv2d input must be NHWC, got " + shape_to_string(input.shape()));
  if (kernels.rank() != 4)
    throw ShapeError("conv2d kernels must be [kh,kw,cin,cout], got " + shape_to_string(kernels.shape()));
  if (kernels.dim(2) != input.dim(3))
    throw ShapeError("conv2d channel mismatch: input " + shape_to_string(input.shape()) + ", kernels " +
                     shape_to_string(kernels.shape()));
  return {input.dim(0), input.dim(3), kernels.dim(3),
          conv_geometry(input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(1), padding, stride)};
}

// Rows are output positions (b, oy, ox); columns are (ky, kx, c), matching
// the flattened [kh*kw*cin, cout] kernel layout.
Tensor im2col(const Tensor& input, const ConvDims& d) {
  const auto& g = d.geo;
  const std::size_t cols = g.kernel_h * g.kernel_w * d.cin;
  Tensor out({d.batch * g.out_h * g.out_w, cols});
  const float* src = input.raw();
  float* dst = out.raw();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        float* row = dst + ((b * g.out_h + oy) * g.out_w + ox) * cols;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            float* cell = row + (ky * g.kernel_w + kx) * d.cin;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              std::fill(cell, cell + d.cin, 0.0f);
            } else {
              const float* px = src + ((b * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                       static_cast<std::size_t>(ix)) * d.cin;
              std::copy(px, px + d.cin, cell);
            }
          }
        }
      }
  return out;
}

void col2im_add(const Tensor& cols_grad, const ConvDims& d, Tensor& d_input) {
  const auto& g = d.geo;
  const std::size_t cols = g.kernel_h * g.kernel_w * d.cin;
  const float* src = cols_grad.raw();
  float* dst = d_input.raw();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const float* row = src + ((b * g.out_h + oy) * g.out_w + ox) * cols;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride.w + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const float* cell = row + (ky * g.kernel_w + kx) * d.cin;
            float* px = dst + ((b * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) *
                                  d.cin;
            for (std::size_t c = 0; c < d.cin; ++c) px[c] += cell[c];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding, Stride2 stride) {
  const ConvDims d = conv_dims(input, kernels, padding, stride);
  const Tensor cols = im2col(input, d);
  const Tensor flat_k = kernels.reshaped({kernels.size() / d.cout, d.cout});
  return matmul(cols, flat_k).reshaped({d.batch, d.geo.out_h, d.geo.out_w, d.cout});
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& d_output, Padding padding,
                            Stride2 stride) {
  const ConvDims d = conv_dims(input, kernels, padding, stride);
  const Shape expected{d.batch, d.geo.out_h, d.geo.out_w, d.cout};
  if (d_output.shape() != expected)
    throw ShapeError("conv2d_backward: gradient shape " + shape_to_string(d_output.shape()) + ", expected " +
                     shape_to_string(expected));
  const Tensor cols = im2col(input, d);
  const Tensor dy = d_output.reshaped({d.batch * d.geo.out_h * d.geo.out_w, d.cout});
  const Tensor flat_k = kernels.reshaped({kernels.size() / d.cout, d.cout});

  Conv2dGrads grads;
  grads.d_kernels = matmul_tn(cols, dy).reshaped(kernels.shape());
  grads.d_input = Tensor(input.shape());
  col2im_add(matmul_nt(dy, flat_k), d, grads.d_input);
  return grads;
}

PoolResult maxpool2d(const Tensor& input, Stride2 size, Stride2 strides) {
  if (input.rank() != 4) throw ShapeError("maxpool2d input must be NHWC, got " + shape_to_string(input.shape()));
  if (size.h == 0 || size.w == 0 || strides.h == 0 || strides.w == 0)
    throw ContractError("maxpool2d size and strides must be >= 1");
  const std::size_t batch = input.dim(0), in_h = input.dim(1), in_w = input.dim(2), ch = input.dim(3);
  if (size.h > in_h || size.w > in_w)
    throw ShapeError("maxpool2d window " + std::to_string(size.h) + "x" + std::to_string(size.w) +
                     " exceeds input " + shape_to_string(input.shape()));
  const std::size_t out_h = (in_h - size.h) / strides.h + 1;
  const std::size_t out_w = (in_w - size.w) / strides.w + 1;

  PoolResult r{Tensor({batch, out_h, out_w, ch}), std::vector<std::size_t>(batch * out_h * out_w * ch)};
  const float* src = input.raw();
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox)
        for (std::size_t c = 0; c < ch; ++c, ++o) {
          std::size_t best = ((b * in_h + oy * strides.h) * in_w + ox * strides.w) * ch + c;
          for (std::size_t wy = 0; wy < size.h; ++wy)
            for (std::size_t wx = 0; wx < size.w; ++wx) {
              const std::size_t idx = ((b * in_h + oy * strides.h + wy) * in_w + ox * strides.w + wx) * ch + c;
              if (src[idx] > src[best]) best = idx;
            }
          r.output[o] = src[best];
          r.argmax[o] = best;
        }
  return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& d_output) {
  if (argmax.size() != d_output.size())
    throw ShapeError("maxpool2d_backward: " + std::to_string(argmax.size()) + " argmax entries for gradient " +
                     shape_to_string(d_output.shape()));
  Tensor d_input(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) d_input[argmax[i]] += d_output[i];
  return d_input;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float eps) {
  if (!(eps > 0.0f)) throw ContractError("finite_diff_grad: eps must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = x[i];
    const float plus = orig + eps;
    const float minus = orig - eps;
    probe[i] = plus;
    const double f_plus = f(probe);
    probe[i] = minus;
    const double f_minus = f(probe);
    probe[i] = orig;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw NumericError("finite_diff_grad: non-finite function value at element " + std::to_string(i));
    // Divide by the step actually taken after float rounding of x +/- eps.
    grad[i] = static_cast<float>((f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus)));
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_relative_error: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

}  // namespace devgan
