#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include "ipfcad/overlay.hpp"
#include "ipfcad/segmentation.hpp"
#include "helpers.hpp"

using namespace ipfcad;
using ipfcad::test::expect_error;

TEST_CASE("all-healthy map renders pure grayscale") {
    const HuSlice slice(16, 16, -600);
    Image2D<uint8_t> map(4, 4, static_cast<uint8_t>(TissueClass::Healthy));
    const RgbImage img = render_overlay(slice, map, 4, -600, 1500);
    const Image2D<uint8_t> gray = window_enrich(slice, -600, 1500);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            const uint8_t g = gray.at(r, c);
            CHECK(img.at(r, c) == std::array<uint8_t, 3>{g, g, g});
        }
}

TEST_CASE("single honeycombing roi tints exactly its 4x4 cell") {
    const HuSlice slice(16, 16, -600);
    Image2D<uint8_t> map(4, 4, 0);
    map.at(0, 0) = static_cast<uint8_t>(TissueClass::Honeycombing);
    const RgbImage img = render_overlay(slice, map, 4, -600, 1500);
    int tinted = 0;
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            const bool is_red = img.at(r, c)[0] > img.at(r, c)[1];
            if (is_red) {
                ++tinted;
                CHECK(r < 4);
                CHECK(c < 4);
            }
        }
    CHECK(tinted == 16);
}

TEST_CASE("tint formula is 0.6*gray + 0.4*color per channel") {
    HuSlice slice(8, 8, -600);  // gray 128
    slice.at(0, 0) = -1350;     // gray 0, checks the formula at another level
    Image2D<uint8_t> map(2, 2, 0);
    map.at(0, 0) = static_cast<uint8_t>(TissueClass::Honeycombing);
    map.at(0, 1) = static_cast<uint8_t>(TissueClass::GroundGlass);
    const RgbImage img = render_overlay(slice, map, 4, -600, 1500);

    // gray 0 under red: (0.4*255, 0, 0) = (102, 0, 0)
    CHECK(img.at(0, 0) == std::array<uint8_t, 3>{102, 0, 0});
    // gray 128 under red: (179, 77, 77)
    CHECK(img.at(1, 1) == std::array<uint8_t, 3>{179, 77, 77});
    // gray 128 under green
    CHECK(img.at(0, 4) == std::array<uint8_t, 3>{77, 179, 77});
    // untinted cell
    CHECK(img.at(4, 4) == std::array<uint8_t, 3>{128, 128, 128});
}

TEST_CASE("class map dims must match the roi grid") {
    const HuSlice slice(16, 16, -600);
    expect_error(ErrorCode::DimMismatch,
                 [&] { render_overlay(slice, Image2D<uint8_t>(3, 4, 0), 4, -600, 1500); });
}

TEST_CASE("png encoder emits a decodable image") {
    RgbImage img(5, 3);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c)
            img.at(r, c) = {static_cast<uint8_t>(r * 40), static_cast<uint8_t>(c * 80), 7};
    const auto png = encode_png_rgb(img);

    // signature
    REQUIRE(png.size() > 45);
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    CHECK(std::equal(std::begin(sig), std::end(sig), png.begin()));

    // IHDR dims (big endian at offsets 16 and 20)
    auto be32 = [&](size_t off) {
        return (uint32_t(png[off]) << 24) | (uint32_t(png[off + 1]) << 16) |
               (uint32_t(png[off + 2]) << 8) | uint32_t(png[off + 3]);
    };
    CHECK(be32(16) == 3u);  // width
    CHECK(be32(20) == 5u);  // height

    // decompress the IDAT payload and compare the raw scanlines
    const uint32_t idat_len = be32(33);
    REQUIRE(std::string(png.begin() + 37, png.begin() + 41) == "IDAT");
    std::vector<uint8_t> raw(5 * (1 + 3 * 3));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, png.data() + 41, idat_len) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (int r = 0; r < 5; ++r) {
        CHECK(raw[static_cast<size_t>(r) * 10] == 0);  // filter byte
        for (int c = 0; c < 3; ++c) {
            const size_t off = static_cast<size_t>(r) * 10 + 1 + static_cast<size_t>(c) * 3;
            CHECK(raw[off] == static_cast<uint8_t>(r * 40));
            CHECK(raw[off + 1] == static_cast<uint8_t>(c * 80));
            CHECK(raw[off + 2] == 7);
        }
    }
}

TEST_CASE("pgm gray export carries the windowed image") {
    HuSlice slice(2, 2, -600);
    const auto gray = window_enrich(slice, -600, 1500);
    const auto pgm = encode_pgm_gray(gray);
    const std::string header = "P5\n2 2\n255\n";
    REQUIRE(pgm.size() == header.size() + 4);
    for (size_t i = 0; i < 4; ++i) CHECK(pgm[header.size() + i] == 128);
}
