#include <gtest/gtest.h>

#include <cmath>

#include "devgan/cleaning.hpp"
#include "devgan/errors.hpp"
#include "devgan/rng.hpp"
#include "image_oracles.hpp"

using namespace devgan;
using namespace devgan::cleaning;
using devgan::testing::brute_force_otsu;
using devgan::testing::random_binary;
using devgan::testing::random_image;

namespace {

bool subset_of(const GrayImage& a, const GrayImage& b) {
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    if (a.pixels[i] == 255 && b.pixels[i] != 255) return false;
  return true;
}

}  // namespace

TEST(Blur, KernelIsNormalizedAndSymmetric) {
  for (double sigma : {0.3, 0.8, 1.5, 10.0}) {
    const auto k = gaussian_kernel_3x3(sigma);
    double total = 0;
    for (const auto& row : k)
      for (double v : row) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(k[0][1], k[1][0]);
    EXPECT_DOUBLE_EQ(k[0][0], k[2][2]);
    EXPECT_GT(k[1][1], k[0][1]);
  }
  EXPECT_THROW(gaussian_kernel_3x3(0.0), ContractError);
}

TEST(Blur, ConstantImageIsFixedPoint) {
  const GrayImage img(9, 7, 200);
  EXPECT_EQ(gaussian_blur_3x3(img, 0.8), img);
}

TEST(Blur, ImpulseStampsRoundedKernel) {
  GrayImage img(5, 5, 0);
  img.at(2, 2) = 255;
  const auto out = gaussian_blur_3x3(img, 0.8);
  // independent kernel for sigma 0.8
  double w[3][3], total = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) total += w[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / (2 * 0.64));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const bool inside = std::abs(x - 2) <= 1 && std::abs(y - 2) <= 1;
      const int want = inside ? static_cast<int>(std::lround(255 * w[y - 1][x - 1] / total)) : 0;
      EXPECT_EQ(out.at(x, y), want) << x << "," << y;
    }
}

TEST(Blur, CommutesWithTranspose) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = random_image(11, 6, seed);
    EXPECT_EQ(gaussian_blur_3x3(transpose(img), 0.8), transpose(gaussian_blur_3x3(img, 0.8)));
  }
}

TEST(Blur, EdgeReplicationAtBorder) {
  // A left column of 255 on a wide image: replication keeps the border column bright.
  GrayImage img(6, 4, 0);
  for (std::size_t y = 0; y < 4; ++y) img.at(0, y) = 255;
  const auto out = gaussian_blur_3x3(img, 0.8);
  const auto k = gaussian_kernel_3x3(0.8);
  const double left = k[0][0] + k[1][0] + k[2][0];
  const double centre = k[0][1] + k[1][1] + k[2][1];
  EXPECT_EQ(out.at(0, 0), std::lround(255 * (left + centre)));
  EXPECT_EQ(out.at(1, 2), std::lround(255 * left));
}

TEST(Otsu, ConstantImage) {
  const auto r = otsu_threshold(GrayImage(4, 4, 77));
  EXPECT_EQ(r.threshold, 77);
  EXPECT_EQ(r.binary, GrayImage(4, 4, 0));
}

TEST(Otsu, HalfBlackHalfWhite) {
  GrayImage img(8, 8, 0);
  for (std::size_t i = 0; i < 32; ++i) img.pixels[i] = 255;
  const auto r = otsu_threshold(img);
  EXPECT_EQ(r.threshold, 0);
  EXPECT_EQ(r.binary, img);
}

TEST(Otsu, MatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto img = random_image(32, 32, seed);
    // Bias half the cases towards bimodal histograms with sparse support, where ties are likely.
    if (seed % 2) {
      Rng rng(seed + 1000);
      for (auto& p : img.pixels) p = rng.uniform() < 0.4 ? static_cast<std::uint8_t>(rng.index(4) * 20)
                                                          : static_cast<std::uint8_t>(200 + rng.index(4) * 10);
    }
    const auto r = otsu_threshold(img);
    ASSERT_EQ(r.threshold, brute_force_otsu(img)) << "seed " << seed;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      ASSERT_EQ(r.binary.pixels[i], img.pixels[i] <= r.threshold ? 0 : 255);
  }
}

TEST(Morphology, AllWhiteUnchanged) {
  const GrayImage img(6, 6, 255);
  EXPECT_EQ(erode(img), img);
  EXPECT_EQ(dilate(img), img);
}

TEST(Morphology, SinglePixel) {
  GrayImage img(7, 7, 0);
  img.at(3, 3) = 255;
  EXPECT_EQ(erode(img), GrayImage(7, 7, 0));
  const auto d = dilate(img);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) EXPECT_EQ(d.at(x, y), (std::abs(x - 3) <= 1 && std::abs(y - 3) <= 1) ? 255 : 0);
  EXPECT_EQ(opening(img), GrayImage(7, 7, 0));
}

TEST(Morphology, OpeningKeepsSolidBlock) {
  GrayImage img(7, 7, 0);
  for (int y = 2; y <= 4; ++y)
    for (int x = 2; x <= 4; ++x) img.at(x, y) = 255;
  EXPECT_EQ(opening(img), img);
}

TEST(Morphology, ClosingFillsHole) {
  GrayImage img(7, 7, 255);
  img.at(3, 3) = 0;
  EXPECT_EQ(closing(img), GrayImage(7, 7, 255));
}

TEST(Morphology, RejectsNonBinary) {
  GrayImage img(3, 3, 0);
  img.at(1, 1) = 128;
  EXPECT_THROW(erode(img), ContractError);
  EXPECT_THROW(dilate(img), ContractError);
  EXPECT_THROW(opening(img), ContractError);
}

TEST(Morphology, AlgebraicProperties) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto img = random_binary(13, 10, seed, 0.3 + 0.01 * static_cast<double>(seed));
    EXPECT_EQ(erode(img), bitwise_not(dilate(bitwise_not(img))));
    EXPECT_EQ(dilate(img), bitwise_not(erode(bitwise_not(img))));
    const auto o = opening(img), c = closing(img);
    EXPECT_EQ(opening(o), o);
    EXPECT_EQ(closing(c), c);
    EXPECT_TRUE(subset_of(o, img));
    EXPECT_TRUE(subset_of(img, c));
  }
}

TEST(Not, InvolutionAndValues) {
  const auto img = random_image(5, 5, 3);
  EXPECT_EQ(bitwise_not(bitwise_not(img)), img);
  const GrayImage z(2, 2, 0);
  EXPECT_EQ(bitwise_not(z), GrayImage(2, 2, 255));
  const auto b = random_binary(6, 6, 2);
  EXPECT_TRUE(bitwise_not(b).is_binary());
}

TEST(Clean, AllBlackBecomesAllWhite) {
  EXPECT_EQ(clean(GrayImage(32, 32, 0)), GrayImage(32, 32, 255));
  CleaningConfig cfg;
  cfg.skip_not = true;
  EXPECT_EQ(clean(GrayImage(32, 32, 0), cfg), GrayImage(32, 32, 0));
}

TEST(Clean, OutputIsBinary) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = clean(random_image(32, 32, seed));
    EXPECT_TRUE(out.is_binary());
  }
}

TEST(Clean, ThresholdAndMorphologyIdempotent) {
  auto stages = [](const GrayImage& x) { return closing(opening(otsu_threshold(x).binary)); };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto once = stages(random_binary(32, 32, seed, 0.4));
    EXPECT_EQ(stages(once), once) << seed;
  }
}

TEST(Clean, PipelineOrder) {
  const auto img = random_image(32, 32, 99);
  const auto manual = bitwise_not(closing(opening(otsu_threshold(gaussian_blur_3x3(img, 0.8)).binary)));
  EXPECT_EQ(clean(img), manual);
}
