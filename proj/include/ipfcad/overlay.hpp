#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

using RgbImage = Image2D<std::array<uint8_t, 3>>;

// Grayscale windowed base with per-ROI disease tint: ground-glass green,
// honeycombing red, blended as out = 0.6*gray + 0.4*color per channel.
// class_map holds one class code per ROI grid cell and must match the slice's
// grid (floor(rows/roi) x floor(cols/roi)).
RgbImage render_overlay(const HuSlice& slice, const Image2D<uint8_t>& class_map, int roi_px,
                        int32_t window_center, int32_t window_width);

// Minimal 8-bit RGB PNG encoder (zlib-deflated, filter 0 scanlines).
std::vector<uint8_t> encode_png_rgb(const RgbImage& image);

}  // namespace ipfcad
