#include "ipfcad/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ipfcad {

Image2D<uint8_t> window_enrich(const HuSlice& slice, int32_t center, int32_t width) {
    if (width <= 0) raise(ErrorCode::ZeroWidth, "window width must be positive");
    Image2D<uint8_t> out(slice.rows, slice.cols);
    const double floor = center - width / 2.0;
    for (size_t i = 0; i < slice.data.size(); ++i) {
        const double v = std::round((slice.data[i] - floor) * 255.0 / width);
        out.data[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

ComponentMap connected_components(const MaskSlice& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        raise(ErrorCode::InvalidArgument, "connectivity must be 4 or 8");

    ComponentMap cm;
    cm.labels = Image2D<int32_t>(mask.rows, mask.cols, 0);

    static constexpr int dr8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int dc8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dr4[] = {-1, 0, 0, 1};
    static constexpr int dc4[] = {0, -1, 1, 0};
    const int* dr = connectivity == 8 ? dr8 : dr4;
    const int* dc = connectivity == 8 ? dc8 : dc4;
    const int ndirs = connectivity;

    std::vector<int32_t> stack;
    int32_t next_label = 0;
    for (int r0 = 0; r0 < mask.rows; ++r0) {
        for (int c0 = 0; c0 < mask.cols; ++c0) {
            if (!mask.at(r0, c0) || cm.labels.at(r0, c0) != 0) continue;
            ++next_label;
            Component comp;
            comp.label = next_label;
            stack.push_back(r0 * mask.cols + c0);
            cm.labels.at(r0, c0) = next_label;
            while (!stack.empty()) {
                const int32_t idx = stack.back();
                stack.pop_back();
                const int r = idx / mask.cols;
                const int c = idx % mask.cols;
                ++comp.area;
                if (r == 0 || c == 0 || r == mask.rows - 1 || c == mask.cols - 1)
                    comp.touches_border = true;
                for (int d = 0; d < ndirs; ++d) {
                    const int nr = r + dr[d];
                    const int nc = c + dc[d];
                    if (!mask.in_bounds(nr, nc)) continue;
                    if (!mask.at(nr, nc) || cm.labels.at(nr, nc) != 0) continue;
                    cm.labels.at(nr, nc) = next_label;
                    stack.push_back(nr * mask.cols + nc);
                }
            }
            cm.components.push_back(comp);
        }
    }
    return cm;
}

namespace {

// Fills false regions not reachable from the border (4-connected flood over
// the background, the complementary connectivity to the 8-connected objects).
void fill_holes_inplace(MaskSlice& mask) {
    Image2D<uint8_t> outside(mask.rows, mask.cols, 0);
    std::vector<int32_t> stack;
    auto push = [&](int r, int c) {
        if (!mask.in_bounds(r, c) || mask.at(r, c) || outside.at(r, c)) return;
        outside.at(r, c) = 1;
        stack.push_back(r * mask.cols + c);
    };
    for (int r = 0; r < mask.rows; ++r) {
        push(r, 0);
        push(r, mask.cols - 1);
    }
    for (int c = 0; c < mask.cols; ++c) {
        push(0, c);
        push(mask.rows - 1, c);
    }
    while (!stack.empty()) {
        const int32_t idx = stack.back();
        stack.pop_back();
        const int r = idx / mask.cols;
        const int c = idx % mask.cols;
        push(r - 1, c);
        push(r + 1, c);
        push(r, c - 1);
        push(r, c + 1);
    }
    for (size_t i = 0; i < mask.data.size(); ++i)
        if (!mask.data[i] && !outside.data[i]) mask.data[i] = 1;
}

}  // namespace

MaskSlice segment_lung_slice(const HuSlice& slice, const SegmentationParams& params) {
    params.validate();

    MaskSlice candidate(slice.rows, slice.cols, 0);
    for (size_t i = 0; i < slice.data.size(); ++i)
        candidate.data[i] = slice.data[i] <= params.air_threshold_hu ? 1 : 0;

    // Border-connected air is the scanner environment, not lung.
    const ComponentMap cm = connected_components(candidate, 8);
    std::vector<uint8_t> keep(cm.components.size() + 1, 0);
    for (const Component& comp : cm.components) {
        if (comp.touches_border) continue;
        if (comp.area < static_cast<uint64_t>(params.min_object_area_px)) continue;
        keep[static_cast<size_t>(comp.label)] = 1;
    }

    MaskSlice out(slice.rows, slice.cols, 0);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = keep[static_cast<size_t>(cm.labels.data[i])];

    if (params.fill_holes) fill_holes_inplace(out);
    return out;
}

BinaryMask segment_lungs(const HuVolume& vol, const SegmentationParams& params) {
    if (vol.slices.empty()) raise(ErrorCode::EmptyVolume, "cannot segment an empty volume");
    BinaryMask mask;
    mask.rows = vol.rows;
    mask.cols = vol.cols;
    mask.slices.reserve(vol.slices.size());
    for (const HuSlice& slice : vol.slices)
        mask.slices.push_back(segment_lung_slice(slice, params));
    return mask;
}

HuVolume apply_mask(const HuVolume& vol, const BinaryMask& mask, int32_t sentinel) {
    if (!mask.same_dims(vol.rows, vol.cols, vol.slice_count()))
        raise(ErrorCode::DimMismatch, "mask dims do not match volume dims");
    HuVolume out = vol;
    for (int s = 0; s < vol.slice_count(); ++s) {
        const MaskSlice& m = mask.slices[s];
        HuSlice& hu = out.slices[s];
        for (size_t i = 0; i < hu.data.size(); ++i)
            if (!m.data[i]) hu.data[i] = sentinel;
    }
    return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (!b.same_dims(a.rows, a.cols, a.slice_count()))
        raise(ErrorCode::DimMismatch, "dice operands differ in dimensions");
    uint64_t inter = 0;
    uint64_t card_a = 0;
    uint64_t card_b = 0;
    for (int s = 0; s < a.slice_count(); ++s) {
        const auto& da = a.slices[s].data;
        const auto& db = b.slices[s].data;
        for (size_t i = 0; i < da.size(); ++i) {
            const bool va = da[i] != 0;
            const bool vb = db[i] != 0;
            card_a += va;
            card_b += vb;
            inter += va && vb;
        }
    }
    if (card_a + card_b == 0) return 1.0;  // identical empty masks
    return static_cast<double>(2 * inter) / static_cast<double>(card_a + card_b);
}

std::vector<uint8_t> encode_pgm(const MaskSlice& mask) {
    Image2D<uint8_t> img(mask.rows, mask.cols);
    for (size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 255 : 0;
    return encode_pgm_gray(img);
}

std::vector<uint8_t> encode_pgm_gray(const Image2D<uint8_t>& img) {
    std::string header = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

}  // namespace ipfcad
