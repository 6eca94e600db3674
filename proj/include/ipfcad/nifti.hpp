#pragma once

#include <cstdint>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

struct VolumeDims {
    int slices = 0;
    int rows = 0;
    int cols = 0;
    bool operator==(const VolumeDims&) const = default;
};

// Little-endian NIfTI-1 single-file subset: 348-byte header, magic "n+1\0" or
// "ni1\0", datatype uint8 or int16, payload at vox_offset. Voxel (slice,row,col)
// maps to file order col-fastest: index = col + cols*(row + rows*slice).
//
// Label codes: 0 unlabeled, 1 healthy, 2 ground-glass, 3 honeycombing. The
// marking tool's encoding is not standardized; this 0-3 map is this project's
// convention.
LabelMask parse_nifti_labels(const std::vector<uint8_t>& bytes, const VolumeDims& expected_dims);

// Any nonzero voxel counts as inside the mask.
BinaryMask parse_nifti_mask(const std::vector<uint8_t>& bytes, const VolumeDims& expected_dims);

std::vector<uint8_t> encode_nifti_labels(const LabelMask& labels);
std::vector<uint8_t> encode_nifti_mask(const BinaryMask& mask);

}  // namespace ipfcad
