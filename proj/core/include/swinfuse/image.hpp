#pragma once

#include "swinfuse/errors.hpp"

#include <filesystem>
#include <vector>

namespace swinfuse {

// Single-channel image, row-major, values in [-1, 1].
struct ImagePlane {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    ImagePlane() = default;
    ImagePlane(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0f) {}

    float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return pixels.size(); }
};

// Reads an 8-bit grayscale or color PNG, or a binary PGM (P5). Color is
// reduced to luminance 0.299 R + 0.587 G + 0.114 B; byte value p maps to
// 2 p / 255 - 1.
ImagePlane load_image(const std::filesystem::path& path);

// Writes 8-bit grayscale, picking the format from the extension (.png or
// .pgm). Values are clamped to [-1, 1] and quantized with round-half-up.
void save_image(const ImagePlane& plane, const std::filesystem::path& path);

} // namespace swinfuse
