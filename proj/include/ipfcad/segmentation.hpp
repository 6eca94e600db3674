#pragma once

#include <cstdint>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

struct SegmentationParams {
    // One inclusive air/lung cut. The parenchyma band is roughly -700..-600 HU
    // but diseased lung reads denser and airway air reads -1000, so the default
    // keeps everything at or below -500 HU as a lung candidate.
    int32_t air_threshold_hu = -500;
    int32_t min_object_area_px = 64;  // per slice
    bool fill_holes = true;
    int32_t excluded_sentinel_hu = -2048;  // outside the physical HU range

    bool operator==(const SegmentationParams&) const = default;

    void validate() const {
        if (air_threshold_hu >= 0)
            raise(ErrorCode::InvalidArgument, "air_threshold_hu must be negative");
        if (min_object_area_px < 1)
            raise(ErrorCode::InvalidArgument, "min_object_area_px must be >= 1");
    }
};

// Linear window/level mapping to an 8-bit display image:
// out = clamp(round((hu - (center - width/2)) * 255 / width), 0, 255)
Image2D<uint8_t> window_enrich(const HuSlice& slice, int32_t center, int32_t width);

struct Component {
    int32_t label = 0;
    uint64_t area = 0;
    bool touches_border = false;
};

struct ComponentMap {
    Image2D<int32_t> labels;  // 0 = background, 1..n = component id
    std::vector<Component> components;
};

// Labels connected true-pixel regions of one mask slice. Connectivity 4 or 8.
ComponentMap connected_components(const MaskSlice& mask, int connectivity);

// Thresholds each slice, removes border-connected air and small objects, and
// optionally fills enclosed holes. The volume mask is the per-slice union.
BinaryMask segment_lungs(const HuVolume& vol, const SegmentationParams& params);
MaskSlice segment_lung_slice(const HuSlice& slice, const SegmentationParams& params);

// Keeps in-mask voxels, sets everything else to the sentinel.
HuVolume apply_mask(const HuVolume& vol, const BinaryMask& mask, int32_t sentinel);

// Sorensen-Dice overlap 2|A^B| / (|A|+|B|). Integer arithmetic until the final
// division. Two empty masks compare as identical (1.0).
double dice(const BinaryMask& a, const BinaryMask& b);

// P5 PGM, foreground 255 / background 0.
std::vector<uint8_t> encode_pgm(const MaskSlice& mask);
std::vector<uint8_t> encode_pgm_gray(const Image2D<uint8_t>& img);

}  // namespace ipfcad
