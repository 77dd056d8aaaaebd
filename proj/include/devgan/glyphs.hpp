#pragma once

#include <cstdint>
#include <filesystem>

#include "devgan/dataset.hpp"

namespace devgan::data {

// Procedural stand-in for the DHCD digit classes: ten stroke templates drawn
// white-on-black inside the central 28x28 of a 32x32 canvas, each sample under
// a random affine jitter, stroke width and control-point wobble. Class names
// follow DHCD ("digit_0" .. "digit_9").
inline constexpr std::size_t kGlyphClasses = 10;

GrayImage render_glyph(std::size_t glyph_class, Rng& rng);

LabeledDataset make_glyph_dataset(std::size_t per_class, std::uint64_t seed, Norm norm,
                                  std::size_t classes = kGlyphClasses);

// Writes root/digit_<k>/<nnnn>.png for use with load_dataset.
void write_glyph_tree(const std::filesystem::path& root, std::size_t per_class, std::uint64_t seed,
                      std::size_t classes = kGlyphClasses);

}  // namespace devgan::data
