#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace devgan {

// Row-major 8-bit grayscale image.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0);
  GrayImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px);

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  // Edge-replicated read for signed coordinates.
  std::uint8_t clamped(std::ptrdiff_t x, std::ptrdiff_t y) const;

  bool is_binary() const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

GrayImage transpose(const GrayImage& img);

// Any PNG is converted to 8-bit gray on read. Throws DataError naming the path.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const GrayImage& img, const std::filesystem::path& path);

// Tiles equally sized images row-major into a cols x rows mosaic.
GrayImage tile_grid(const std::vector<GrayImage>& tiles, std::size_t cols, std::size_t rows);

}  // namespace devgan
