#include "ipfcad/blocking.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "ipfcad/rng.hpp"

namespace ipfcad {

std::vector<RoiCell> grid_rois(int rows, int cols, int roi_px) {
    if (roi_px < 1) raise(ErrorCode::InvalidArgument, "roi_px must be >= 1");
    std::vector<RoiCell> cells;
    const int n_rows = rows / roi_px;
    const int n_cols = cols / roi_px;
    if (n_rows <= 0 || n_cols <= 0) return cells;
    cells.reserve(static_cast<size_t>(n_rows) * n_cols);
    for (int gr = 0; gr < n_rows; ++gr)
        for (int gc = 0; gc < n_cols; ++gc)
            cells.push_back(RoiCell{gr, gc, gr * roi_px, gc * roi_px});
    return cells;
}

std::optional<TissueClass> dominant_label(std::span<const uint8_t> roi_labels,
                                          double min_labeled_fraction) {
    if (roi_labels.empty()) return std::nullopt;
    std::array<uint32_t, 4> counts{};
    for (uint8_t v : roi_labels) ++counts[v <= 3 ? v : 0];
    const uint32_t labeled = counts[1] + counts[2] + counts[3];
    if (static_cast<double>(labeled) < min_labeled_fraction * static_cast<double>(roi_labels.size()))
        return std::nullopt;
    // Tie-break priority: honeycombing, then ground-glass, then healthy.
    static constexpr TissueClass priority[] = {TissueClass::Honeycombing, TissueClass::GroundGlass,
                                               TissueClass::Healthy};
    TissueClass best = TissueClass::Honeycombing;
    uint32_t best_count = 0;
    for (TissueClass c : priority) {
        const uint32_t n = counts[static_cast<size_t>(c)];
        if (n > best_count) {
            best = c;
            best_count = n;
        }
    }
    return best;
}

Image2D<int32_t> extract_block(const HuSlice& masked_slice, const RoiCell& cell,
                               const BlockingParams& params, int32_t sentinel) {
    const int side = params.block_side();
    Image2D<int32_t> patch(side, side, -1000);
    const int r_start = cell.row0 - params.padding_px;
    const int c_start = cell.col0 - params.padding_px;
    for (int r = 0; r < side; ++r) {
        const int sr = r_start + r;
        if (sr < 0 || sr >= masked_slice.rows) continue;
        for (int c = 0; c < side; ++c) {
            const int sc = c_start + c;
            if (sc < 0 || sc >= masked_slice.cols) continue;
            const int32_t v = masked_slice.at(sr, sc);
            patch.at(r, c) = v == sentinel ? -1000 : v;
        }
    }
    return patch;
}

Image2D<float> normalize_block(const Image2D<int32_t>& patch) {
    Image2D<float> out(patch.rows, patch.cols);
    for (size_t i = 0; i < patch.data.size(); ++i) {
        const int32_t clipped = std::clamp(patch.data[i], -1000, 400);
        out.data[i] = static_cast<float>(clipped + 1000) / 1400.0f;
    }
    return out;
}

std::vector<Block> extract_labeled_blocks(const HuVolume& masked_vol, const LabelMask& labels,
                                          const BlockingParams& params, uint16_t patient_id,
                                          int32_t sentinel) {
    params.validate();
    if (labels.rows != masked_vol.rows || labels.cols != masked_vol.cols ||
        labels.slice_count() != masked_vol.slice_count())
        raise(ErrorCode::DimMismatch, "label mask dims do not match volume dims");

    std::vector<Block> blocks;
    const std::vector<RoiCell> cells = grid_rois(masked_vol.rows, masked_vol.cols, params.roi_px);
    std::vector<uint8_t> roi_labels(static_cast<size_t>(params.roi_px) * params.roi_px);

    for (int s = 0; s < masked_vol.slice_count(); ++s) {
        const HuSlice& hu = masked_vol.slices[s];
        const LabelSlice& lab = labels.slices[s];
        for (const RoiCell& cell : cells) {
            size_t k = 0;
            for (int r = 0; r < params.roi_px; ++r)
                for (int c = 0; c < params.roi_px; ++c)
                    roi_labels[k++] = lab.at(cell.row0 + r, cell.col0 + c);
            const auto label = dominant_label(roi_labels, params.min_labeled_fraction);
            if (!label) continue;
            Block b;
            b.patch = normalize_block(extract_block(hu, cell, params, sentinel));
            b.label = *label;
            b.patient_id = patient_id;
            b.slice_index = static_cast<uint16_t>(s);
            b.grid_row = static_cast<uint16_t>(cell.grid_row);
            b.grid_col = static_cast<uint16_t>(cell.grid_col);
            blocks.push_back(std::move(b));
        }
    }
    return blocks;
}

std::array<uint64_t, 3> count_by_class(const std::vector<Block>& blocks) {
    std::array<uint64_t, 3> counts{};  // {honeycombing, groundglass, healthy}
    for (const Block& b : blocks) {
        switch (b.label) {
            case TissueClass::Honeycombing: ++counts[0]; break;
            case TissueClass::GroundGlass: ++counts[1]; break;
            case TissueClass::Healthy: ++counts[2]; break;
            default: raise(ErrorCode::InvalidArgument, "block with unlabeled class");
        }
    }
    return counts;
}

std::array<uint64_t, 3> balance_targets(const std::array<uint64_t, 3>& raw_counts,
                                        const std::array<double, 3>& ratios) {
    for (uint64_t n : raw_counts)
        if (n == 0) raise(ErrorCode::EmptyClass, "every class needs at least one block");

    const uint64_t hc = raw_counts[0];
    const uint64_t gg = raw_counts[1];
    const bool hc_is_anchor = hc <= gg;
    const double m = static_cast<double>(hc_is_anchor ? hc : gg);

    auto target = [&](double ratio, uint64_t available) {
        const uint64_t t = static_cast<uint64_t>(std::llround(ratio * m));
        return std::min(t, available);
    };
    std::array<uint64_t, 3> out{};
    out[0] = target(hc_is_anchor ? ratios[0] : ratios[1], hc);
    out[1] = target(hc_is_anchor ? ratios[1] : ratios[0], gg);
    out[2] = target(ratios[2], raw_counts[2]);
    return out;
}

namespace {

// Picks k of n indices uniformly without replacement (partial Fisher-Yates),
// then restores ascending order so the subset is stable w.r.t. input order.
std::vector<size_t> sample_indices(size_t n, size_t k, Rng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
        const size_t j = i + static_cast<size_t>(rng.next_below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::vector<Block> balance_blocks(const std::vector<Block>& blocks,
                                  const std::array<double, 3>& ratios, uint64_t seed) {
    std::array<std::vector<size_t>, 3> by_class;
    for (size_t i = 0; i < blocks.size(); ++i) {
        switch (blocks[i].label) {
            case TissueClass::Honeycombing: by_class[0].push_back(i); break;
            case TissueClass::GroundGlass: by_class[1].push_back(i); break;
            case TissueClass::Healthy: by_class[2].push_back(i); break;
            default: raise(ErrorCode::InvalidArgument, "block with unlabeled class");
        }
    }
    const std::array<uint64_t, 3> raw{by_class[0].size(), by_class[1].size(), by_class[2].size()};
    const std::array<uint64_t, 3> targets = balance_targets(raw, ratios);

    Rng rng(seed);
    std::vector<Block> out;
    out.reserve(targets[0] + targets[1] + targets[2]);
    for (int c = 0; c < 3; ++c) {
        const auto chosen = sample_indices(by_class[c].size(), static_cast<size_t>(targets[c]), rng);
        for (size_t k : chosen) out.push_back(blocks[by_class[c][k]]);
    }
    return out;
}

namespace {

constexpr char kIpfbMagic[4] = {'I', 'P', 'F', 'B'};
constexpr uint32_t kIpfbVersion = 1;
constexpr int kIpfbSide = 12;
constexpr size_t kIpfbPatchValues = static_cast<size_t>(kIpfbSide) * kIpfbSide;

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v));
    b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<uint8_t>& b, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(b, v);
}

struct ByteCursor {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > b.size()) raise(ErrorCode::BadHeader, "IPFB file truncated");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(b[pos]) | static_cast<uint16_t>(b[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[pos + i];
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[pos + i];
        pos += 8;
        return v;
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    float f32() {
        const uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
};

}  // namespace

std::vector<uint8_t> encode_ipfb(const std::vector<Block>& blocks) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kIpfbMagic, kIpfbMagic + 4);
    put_u32(out, kIpfbVersion);
    put_u64(out, blocks.size());
    for (const Block& b : blocks) {
        if (b.patch.rows != kIpfbSide || b.patch.cols != kIpfbSide)
            raise(ErrorCode::InvalidArgument,
                  "IPFB stores 12x12 patches; got " + std::to_string(b.patch.rows) + "x" +
                      std::to_string(b.patch.cols));
        put_u16(out, b.patient_id);
        put_u16(out, b.slice_index);
        put_u16(out, b.grid_row);
        put_u16(out, b.grid_col);
        out.push_back(static_cast<uint8_t>(b.label));
        for (float v : b.patch.data) put_f32(out, v);
    }
    return out;
}

std::vector<Block> decode_ipfb(const std::vector<uint8_t>& bytes) {
    ByteCursor c{bytes};
    c.need(4);
    if (std::memcmp(bytes.data(), kIpfbMagic, 4) != 0)
        raise(ErrorCode::BadMagic, "not an IPFB file");
    c.pos = 4;
    const uint32_t version = c.u32();
    if (version != kIpfbVersion)
        raise(ErrorCode::VersionMismatch, "IPFB version " + std::to_string(version));
    const uint64_t count = c.u64();

    std::vector<Block> blocks;
    blocks.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        Block b;
        b.patient_id = c.u16();
        b.slice_index = c.u16();
        b.grid_row = c.u16();
        b.grid_col = c.u16();
        const uint8_t label = c.u8();
        if (label < 1 || label > 3)
            raise(ErrorCode::UnknownLabelCode, "IPFB block label " + std::to_string(label));
        b.label = static_cast<TissueClass>(label);
        b.patch = Image2D<float>(kIpfbSide, kIpfbSide);
        for (size_t k = 0; k < kIpfbPatchValues; ++k) b.patch.data[k] = c.f32();
        blocks.push_back(std::move(b));
    }
    if (c.pos != bytes.size()) raise(ErrorCode::BadHeader, "trailing bytes after IPFB payload");
    return blocks;
}

std::string block_manifest_csv(const std::vector<Block>& blocks) {
    // (patient, class) -> count, rows ordered by patient then class code
    std::map<std::pair<uint16_t, uint8_t>, uint64_t> counts;
    for (const Block& b : blocks) ++counts[{b.patient_id, static_cast<uint8_t>(b.label)}];
    std::string csv = "patient_id,class,count\n";
    for (const auto& [key, n] : counts) {
        csv += std::to_string(key.first);
        csv += ',';
        csv += tissue_class_name(static_cast<TissueClass>(key.second));
        csv += ',';
        csv += std::to_string(n);
        csv += '\n';
    }
    return csv;
}

}  // namespace ipfcad
