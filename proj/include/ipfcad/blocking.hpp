#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

struct BlockingParams {
    int roi_px = 4;
    int padding_px = 4;
    double min_labeled_fraction = 0.5;
    // Role-ordered ratios, anchored at the smaller of the two diseased
    // classes: {minority diseased, other diseased, healthy}. Table-2 style
    // balancing keeps the minority diseased class intact (ratio 1.0).
    std::array<double, 3> balance_ratios{1.0, 1.5, 2.5};
    uint64_t rng_seed = 0;

    int block_side() const { return roi_px + 2 * padding_px; }

    bool operator==(const BlockingParams&) const = default;

    void validate() const {
        if (roi_px < 1) raise(ErrorCode::InvalidArgument, "roi_px must be >= 1");
        if (padding_px < 0) raise(ErrorCode::InvalidArgument, "padding_px must be >= 0");
        if (!(min_labeled_fraction > 0.0 && min_labeled_fraction <= 1.0))
            raise(ErrorCode::InvalidArgument, "min_labeled_fraction must be in (0,1]");
        for (double r : balance_ratios)
            if (!(r > 0.0)) raise(ErrorCode::InvalidArgument, "balance ratios must be positive");
    }
};

// One normalized network input patch with provenance.
struct Block {
    Image2D<float> patch;  // block_side x block_side, values in [0,1]
    TissueClass label = TissueClass::Unlabeled;
    uint16_t patient_id = 0;
    uint16_t slice_index = 0;
    uint16_t grid_row = 0;
    uint16_t grid_col = 0;
};

struct RoiCell {
    int grid_row = 0;
    int grid_col = 0;
    int row0 = 0;  // pixel origin
    int col0 = 0;
};

// Non-overlapping ROI grid with stride roi_px; trailing partial strips are
// discarded.
std::vector<RoiCell> grid_rois(int rows, int cols, int roi_px);

// Majority class over the ROI's voxels, or nullopt (discard) when fewer than
// min_labeled_fraction of them carry an expert label. Count ties break
// honeycombing > ground-glass > healthy.
std::optional<TissueClass> dominant_label(std::span<const uint8_t> roi_labels,
                                          double min_labeled_fraction);

// (roi + 2*padding)^2 HU window around the ROI at `cell`. Context outside the
// image or outside the mask (== sentinel) reads as -1000 HU air.
Image2D<int32_t> extract_block(const HuSlice& masked_slice, const RoiCell& cell,
                               const BlockingParams& params, int32_t sentinel = -2048);

// Clips to [-1000, 400] HU and maps linearly onto [0,1].
Image2D<float> normalize_block(const Image2D<int32_t>& patch);

// Runs the grid + dominant-label + extraction pipeline over a masked, labeled
// volume. Slices are processed in order; blocks come back unbalanced.
std::vector<Block> extract_labeled_blocks(const HuVolume& masked_vol, const LabelMask& labels,
                                          const BlockingParams& params, uint16_t patient_id,
                                          int32_t sentinel = -2048);

// Downsamples per class toward ratio * m where m is the smaller diseased class
// count. Selection is uniform without replacement and reproducible by seed;
// within a class the surviving blocks keep their original order.
std::vector<Block> balance_blocks(const std::vector<Block>& blocks,
                                  const std::array<double, 3>& ratios, uint64_t seed);

// Target counts used by balance_blocks, exposed for tests and reporting.
// Input and output order: {honeycombing, groundglass, healthy}.
std::array<uint64_t, 3> balance_targets(const std::array<uint64_t, 3>& raw_counts,
                                        const std::array<double, 3>& ratios);

std::array<uint64_t, 3> count_by_class(const std::vector<Block>& blocks);

// Flat binary block-set format (magic IPFB). Fixed 12x12 patch geometry.
std::vector<uint8_t> encode_ipfb(const std::vector<Block>& blocks);
std::vector<Block> decode_ipfb(const std::vector<uint8_t>& bytes);

// CSV manifest: patient_id,class,count
std::string block_manifest_csv(const std::vector<Block>& blocks);

}  // namespace ipfcad
