#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipfcad/error.hpp"

namespace ipfcad {

// Expert tissue classes. Unlabeled marks voxels outside the marked area and is
// never a training target. The numeric codes double as the NIfTI label codes
// and the IPFB label byte.
enum class TissueClass : uint8_t {
    Unlabeled = 0,
    Healthy = 1,
    GroundGlass = 2,
    Honeycombing = 3,
};

inline const char* tissue_class_name(TissueClass c) {
    switch (c) {
        case TissueClass::Unlabeled: return "unlabeled";
        case TissueClass::Healthy: return "healthy";
        case TissueClass::GroundGlass: return "groundglass";
        case TissueClass::Honeycombing: return "honeycombing";
    }
    return "?";
}

// Row-major 2-D grid.
template <typename T>
struct Image2D {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Image2D() = default;
    Image2D(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return data.size(); }
    bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }

    bool operator==(const Image2D&) const = default;
};

using HuSlice = Image2D<int32_t>;
using MaskSlice = Image2D<uint8_t>;   // 0 / 1
using LabelSlice = Image2D<uint8_t>;  // TissueClass codes 0..3

// Ordered stack of CT slices in Hounsfield units.
struct HuVolume {
    std::string patient_id;
    int rows = 0;
    int cols = 0;
    std::vector<HuSlice> slices;

    int slice_count() const { return static_cast<int>(slices.size()); }
    bool operator==(const HuVolume&) const = default;
};

// Per-voxel lung membership.
struct BinaryMask {
    int rows = 0;
    int cols = 0;
    std::vector<MaskSlice> slices;

    BinaryMask() = default;
    BinaryMask(int r, int c, int n) : rows(r), cols(c), slices(n, MaskSlice(r, c, 0)) {}

    int slice_count() const { return static_cast<int>(slices.size()); }

    uint64_t cardinality() const {
        uint64_t n = 0;
        for (const auto& s : slices)
            for (uint8_t v : s.data) n += (v != 0);
        return n;
    }

    bool same_dims(int r, int c, int n) const {
        return rows == r && cols == c && slice_count() == n;
    }
    bool operator==(const BinaryMask&) const = default;
};

// Per-voxel expert class; dims must match the paired HuVolume.
struct LabelMask {
    int rows = 0;
    int cols = 0;
    std::vector<LabelSlice> slices;

    LabelMask() = default;
    LabelMask(int r, int c, int n) : rows(r), cols(c), slices(n, LabelSlice(r, c, 0)) {}

    int slice_count() const { return static_cast<int>(slices.size()); }
    TissueClass at(int s, int r, int c) const {
        return static_cast<TissueClass>(slices[s].at(r, c));
    }
    bool operator==(const LabelMask&) const = default;
};

}  // namespace ipfcad
