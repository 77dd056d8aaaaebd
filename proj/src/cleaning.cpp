#include "devgan/cleaning.hpp"

#include <cmath>

#include "devgan/errors.hpp"

namespace devgan::cleaning {

Kernel3 gaussian_kernel_3x3(double sigma) {
  if (!(sigma > 0.0)) throw ContractError("gaussian blur sigma must be > 0");
  Kernel3 k{};
  double total = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[dy + 1][dx + 1] = w;
      total += w;
    }
  for (auto& row : k)
    for (auto& w : row) w /= total;
  return k;
}

GrayImage gaussian_blur_3x3(const GrayImage& img, double sigma) {
  const Kernel3 k = gaussian_kernel_3x3(sigma);
  GrayImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          acc += k[dy + 1][dx + 1] *
                 img.clamped(static_cast<std::ptrdiff_t>(x) + dx, static_cast<std::ptrdiff_t>(y) + dy);
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  return out;
}

OtsuResult otsu_threshold(const GrayImage& img) {
  std::array<std::uint64_t, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  const std::uint64_t total = img.pixels.size();
  std::uint64_t sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += static_cast<std::uint64_t>(i) * hist[i];

  // Between-class variance times total^2 equals (S0*N - S*n0)^2 / (n0*n1),
  // with n0/S0 the count/intensity sum at or below t. Candidates are compared
  // as exact fractions in 128-bit integers, which cannot overflow up to 2^16
  // pixels; larger images fall back to long double.
  using u128 = unsigned __int128;
  const bool exact = total <= (1u << 16);
  int best_t = -1;
  u128 best_num = 0, best_den = 1;
  std::uint64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += static_cast<std::uint64_t>(t) * hist[t];
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const auto a = static_cast<__int128>(s0) * total;
    const auto b = static_cast<__int128>(sum_all) * n0;
    const u128 diff = static_cast<u128>(a > b ? a - b : b - a);
    const u128 num = diff * diff;
    const u128 den = static_cast<u128>(n0) * n1;
    const bool better = exact ? num * best_den > best_num * den
                              : static_cast<long double>(num) / static_cast<long double>(den) >
                                    static_cast<long double>(best_num) / static_cast<long double>(best_den);
    if (best_t < 0 || better) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }

  OtsuResult r;
  if (best_t < 0 || best_num == 0) {
    // Single-valued histogram.
    r.threshold = img.pixels.empty() ? 0 : img.pixels.front();
    r.binary = GrayImage(img.width, img.height, 0);
    return r;
  }
  r.threshold = best_t;
  r.binary = GrayImage(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) r.binary.pixels[i] = img.pixels[i] <= best_t ? 0 : 255;
  return r;
}

namespace {

void require_binary(const GrayImage& img, const char* op) {
  if (!img.is_binary()) throw ContractError(std::string(op) + " expects a binary {0,255} image");
}

// keep_if_all: erosion (all neighbors 255); otherwise dilation (any neighbor 255).
GrayImage morph(const GrayImage& img, bool keep_if_all) {
  GrayImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      bool all = true, any = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const bool on =
              img.clamped(static_cast<std::ptrdiff_t>(x) + dx, static_cast<std::ptrdiff_t>(y) + dy) == 255;
          all = all && on;
          any = any || on;
        }
      out.at(x, y) = (keep_if_all ? all : any) ? 255 : 0;
    }
  return out;
}

}  // namespace

GrayImage erode(const GrayImage& img) {
  require_binary(img, "erode");
  return morph(img, true);
}

GrayImage dilate(const GrayImage& img) {
  require_binary(img, "dilate");
  return morph(img, false);
}

GrayImage opening(const GrayImage& img) { return dilate(erode(img)); }

GrayImage closing(const GrayImage& img) { return erode(dilate(img)); }

GrayImage bitwise_not(const GrayImage& img) {
  GrayImage out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

GrayImage clean(const GrayImage& img, const CleaningConfig& cfg) {
  GrayImage g = gaussian_blur_3x3(img, cfg.blur_sigma);
  g = otsu_threshold(g).binary;
  g = closing(opening(g));
  return cfg.skip_not ? g : bitwise_not(g);
}

}  // namespace devgan::cleaning
