#include "devgan/glyphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "devgan/errors.hpp"

namespace devgan::data {
namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

Stroke arc(double cx, double cy, double rx, double ry, double deg0, double deg1, int steps = 24) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double a = (deg0 + (deg1 - deg0) * i / steps) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

// Templates in a unit box, x to the right and y downwards.
std::vector<Stroke> glyph_template(std::size_t k) {
  switch (k) {
    case 0: return {arc(0.5, 0.5, 0.3, 0.4, 0, 360, 32)};
    case 1: return {{{0.32, 0.25}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: return {{{0.2, 0.3}, {0.35, 0.12}, {0.65, 0.12}, {0.8, 0.3}, {0.2, 0.88}, {0.84, 0.88}}};
    case 3: return {{{0.2, 0.15}, {0.7, 0.15}, {0.8, 0.3}, {0.45, 0.48}, {0.8, 0.65}, {0.75, 0.85}, {0.2, 0.88}}};
    case 4: return {{{0.65, 0.9}, {0.65, 0.1}, {0.15, 0.65}, {0.85, 0.65}}};
    case 5:
      return {{{0.8, 0.12}, {0.25, 0.12}, {0.22, 0.45}, {0.6, 0.42}, {0.8, 0.62}, {0.65, 0.88}, {0.2, 0.85}}};
    case 6: return {{{0.75, 0.1}, {0.35, 0.35}, {0.23, 0.66}}, arc(0.5, 0.68, 0.27, 0.2, 180, 540)};
    case 7: return {{{0.15, 0.12}, {0.85, 0.12}, {0.4, 0.9}}, {{0.35, 0.5}, {0.72, 0.5}}};
    case 8: return {arc(0.5, 0.3, 0.22, 0.18, 0, 360), arc(0.5, 0.7, 0.28, 0.2, 0, 360)};
    case 9: return {arc(0.5, 0.32, 0.25, 0.2, 0, 360), {{0.75, 0.32}, {0.7, 0.9}}};
    default: throw ContractError("glyph class " + std::to_string(k) + " outside [0, 10)");
  }
}

double segment_distance(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

GrayImage render_glyph(std::size_t glyph_class, Rng& rng) {
  auto strokes = glyph_template(glyph_class);
  const double scale = rng.uniform(0.85, 1.05) * 22.0;
  const double angle = rng.uniform(-12.0, 12.0) * std::numbers::pi / 180.0;
  const double shear = rng.uniform(-0.15, 0.15);
  const double tx = rng.uniform(-1.5, 1.5), ty = rng.uniform(-1.5, 1.5);
  const double half_width = rng.uniform(0.9, 1.5);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (auto& stroke : strokes)
    for (auto& p : stroke) {
      const double ux = p.x - 0.5 + rng.uniform(-0.025, 0.025);
      const double uy = p.y - 0.5 + rng.uniform(-0.025, 0.025);
      const double sx = (ux + shear * uy) * scale, sy = uy * scale;
      p = {16.0 + ca * sx - sa * sy + tx, 16.0 + sa * sx + ca * sy + ty};
    }

  GrayImage img(kImageSide, kImageSide);
  for (std::size_t y = 0; y < kImageSide; ++y)
    for (std::size_t x = 0; x < kImageSide; ++x) {
      const Pt c{x + 0.5, y + 0.5};
      double d = 1e9;
      for (const auto& stroke : strokes)
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) d = std::min(d, segment_distance(c, stroke[i], stroke[i + 1]));
      const double coverage = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
      img.at(x, y) = static_cast<std::uint8_t>(std::lround(coverage * 255.0));
    }
  return img;
}

LabeledDataset make_glyph_dataset(std::size_t per_class, std::uint64_t seed, Norm norm, std::size_t classes) {
  if (classes == 0 || classes > kGlyphClasses) throw ContractError("glyph set supports 1..10 classes");
  std::vector<GrayImage> images;
  std::vector<int> labels;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) {
    names.push_back("digit_" + std::to_string(k));
    Rng rng(Rng::derive(seed, k));
    for (std::size_t i = 0; i < per_class; ++i) {
      images.push_back(render_glyph(k, rng));
      labels.push_back(static_cast<int>(k));
    }
  }
  return from_images(images, std::move(labels), std::move(names), norm);
}

void write_glyph_tree(const std::filesystem::path& root, std::size_t per_class, std::uint64_t seed,
                      std::size_t classes) {
  const auto ds = make_glyph_dataset(per_class, seed, Norm::unit, classes);
  for (std::size_t k = 0; k < classes; ++k) std::filesystem::create_directories(root / ds.class_names[k]);
  std::vector<std::size_t> counter(classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto label = static_cast<std::size_t>(ds.labels[i]);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.png", counter[label]++);
    write_png(ds.image(i), root / ds.class_names[label] / name);
  }
}

}  // namespace devgan::data
