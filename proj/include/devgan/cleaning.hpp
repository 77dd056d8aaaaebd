#pragma once

#include <array>

#include "devgan/image.hpp"

namespace devgan::cleaning {

// Denoising pipeline for generated glyphs:
//   gaussian blur 3x3 -> Otsu threshold -> opening -> closing -> bitwise NOT
// All neighborhoods use edge replication at the border.
struct CleaningConfig {
  double blur_sigma = 0.8;
  // Drop the final NOT for data whose polarity already matches the target.
  bool skip_not = false;
};

using Kernel3 = std::array<std::array<double, 3>, 3>;

// Normalized kernel, k[dy+1][dx+1] proportional to exp(-(dx^2+dy^2)/(2 sigma^2)).
Kernel3 gaussian_kernel_3x3(double sigma);

// Rounds to the nearest 8-bit value.
GrayImage gaussian_blur_3x3(const GrayImage& img, double sigma);

struct OtsuResult {
  int threshold = 0;
  GrayImage binary;  // pixel <= threshold -> 0, otherwise 255
};

// Threshold maximizing between-class variance over the 256-bin histogram;
// ties take the lowest threshold. A single-valued image has zero variance
// everywhere: the threshold is that value and every pixel maps to 0.
OtsuResult otsu_threshold(const GrayImage& img);

// 3x3 all-ones structuring element. Inputs must be strictly {0,255}
// (ContractError otherwise).
GrayImage erode(const GrayImage& img);
GrayImage dilate(const GrayImage& img);
GrayImage opening(const GrayImage& img);
GrayImage closing(const GrayImage& img);

GrayImage bitwise_not(const GrayImage& img);

GrayImage clean(const GrayImage& img, const CleaningConfig& cfg = {});

}  // namespace devgan::cleaning
