#include "devgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

#include "devgan/errors.hpp"

namespace devgan {

GrayImage::GrayImage(std::size_t w, std::size_t h, std::uint8_t fill) : width(w), height(h), pixels(w * h, fill) {}

GrayImage::GrayImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (pixels.size() != w * h)
    throw ShapeError("GrayImage: " + std::to_string(pixels.size()) + " pixels for " + std::to_string(w) + "x" +
                     std::to_string(h));
}

std::uint8_t GrayImage::clamped(std::ptrdiff_t x, std::ptrdiff_t y) const {
  const auto cx = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(width) - 1);
  const auto cy = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(height) - 1);
  return pixels[static_cast<std::size_t>(cy) * width + static_cast<std::size_t>(cx)];
}

bool GrayImage::is_binary() const {
  return std::all_of(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p == 0 || p == 255; });
}

GrayImage transpose(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) out.at(y, x) = img.at(x, y);
  return out;
}

GrayImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  GrayImage out(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const GrayImage& img, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
}

GrayImage tile_grid(const std::vector<GrayImage>& tiles, std::size_t cols, std::size_t rows) {
  if (tiles.empty()) throw ContractError("tile_grid: no tiles");
  const std::size_t tw = tiles.front().width, th = tiles.front().height;
  GrayImage out(tw * cols, th * rows);
  for (std::size_t i = 0; i < std::min(tiles.size(), cols * rows); ++i) {
    const auto& t = tiles[i];
    if (t.width != tw || t.height != th) throw ShapeError("tile_grid: tiles differ in size");
    const std::size_t ox = (i % cols) * tw, oy = (i / cols) * th;
    for (std::size_t y = 0; y < th; ++y)
      std::copy_n(t.pixels.begin() + static_cast<std::ptrdiff_t>(y * tw), tw,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>((oy + y) * out.width + ox));
  }
  return out;
}

}  // namespace devgan
