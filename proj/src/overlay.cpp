#include "ipfcad/overlay.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include <zlib.h>

#include "ipfcad/segmentation.hpp"

namespace ipfcad {

RgbImage render_overlay(const HuSlice& slice, const Image2D<uint8_t>& class_map, int roi_px,
                        int32_t window_center, int32_t window_width) {
    if (roi_px < 1) raise(ErrorCode::InvalidArgument, "roi_px must be >= 1");
    const int grid_rows = slice.rows / roi_px;
    const int grid_cols = slice.cols / roi_px;
    if (class_map.rows != grid_rows || class_map.cols != grid_cols)
        raise(ErrorCode::DimMismatch,
              "class map is " + std::to_string(class_map.rows) + "x" + std::to_string(class_map.cols) +
                  ", slice grid is " + std::to_string(grid_rows) + "x" + std::to_string(grid_cols));

    const Image2D<uint8_t> gray = window_enrich(slice, window_center, window_width);
    RgbImage out(slice.rows, slice.cols);
    for (int r = 0; r < slice.rows; ++r)
        for (int c = 0; c < slice.cols; ++c) {
            const uint8_t g = gray.at(r, c);
            out.at(r, c) = {g, g, g};
        }

    auto tint = [](uint8_t gray_v, uint8_t color_v) {
        return static_cast<uint8_t>(std::lround(0.6 * gray_v + 0.4 * color_v));
    };

    for (int gr = 0; gr < grid_rows; ++gr) {
        for (int gc = 0; gc < grid_cols; ++gc) {
            const auto cls = static_cast<TissueClass>(class_map.at(gr, gc));
            if (cls != TissueClass::GroundGlass && cls != TissueClass::Honeycombing) continue;
            const std::array<uint8_t, 3> color =
                cls == TissueClass::Honeycombing ? std::array<uint8_t, 3>{255, 0, 0}
                                                 : std::array<uint8_t, 3>{0, 255, 0};
            for (int r = gr * roi_px; r < (gr + 1) * roi_px; ++r)
                for (int c = gc * roi_px; c < (gc + 1) * roi_px; ++c) {
                    const uint8_t g = gray.at(r, c);
                    out.at(r, c) = {tint(g, color[0]), tint(g, color[1]), tint(g, color[2])};
                }
        }
    }
    return out;
}

namespace {

void put_u32_be(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 3; i >= 0; --i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32_be(out, crc);
}

}  // namespace

std::vector<uint8_t> encode_png_rgb(const RgbImage& image) {
    if (image.rows < 1 || image.cols < 1)
        raise(ErrorCode::InvalidArgument, "cannot encode an empty image");

    // Raw scanlines, each prefixed with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(image.rows) * (1 + static_cast<size_t>(image.cols) * 3));
    for (int r = 0; r < image.rows; ++r) {
        raw.push_back(0);
        for (int c = 0; c < image.cols; ++c) {
            const auto& px = image.at(r, c);
            raw.insert(raw.end(), px.begin(), px.end());
        }
    }

    uLongf compressed_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(compressed_len);
    if (compress2(compressed.data(), &compressed_len, raw.data(), static_cast<uLong>(raw.size()),
                  Z_BEST_SPEED) != Z_OK)
        raise(ErrorCode::IoFailure, "zlib compression failed");
    compressed.resize(compressed_len);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(image.cols));
    put_u32_be(ihdr, static_cast<uint32_t>(image.rows));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});
    return out;
}

}  // namespace ipfcad
