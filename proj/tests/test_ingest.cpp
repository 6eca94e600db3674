#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <numeric>

#include "ipfcad/dicom.hpp"
#include "ipfcad/nifti.hpp"
#include "ipfcad/rng.hpp"
#include "helpers.hpp"

using namespace ipfcad;
using ipfcad::test::TempDir;
using ipfcad::test::expect_error;

namespace {

RawSlice make_slice(int rows, int cols, std::vector<int32_t> values) {
    RawSlice s;
    s.rows = rows;
    s.cols = cols;
    s.stored_values = std::move(values);
    return s;
}

}  // namespace

TEST_CASE("dicom round-trip of a synthetic 4x4 slice") {
    std::vector<int32_t> values(16);
    std::iota(values.begin(), values.end(), 0);
    RawSlice s = make_slice(4, 4, values);
    s.instance_number = 7;
    s.slice_location = 12.5;
    s.rescale_slope = 1.0;
    s.rescale_intercept = -1024.0;

    const RawSlice parsed = parse_dicom_slice(encode_dicom_slice(s));
    CHECK(parsed.rows == 4);
    CHECK(parsed.cols == 4);
    CHECK(parsed.bits_allocated == 16);
    CHECK(parsed.stored_values == values);
    CHECK(parsed.instance_number == 7);
    CHECK(parsed.slice_location == doctest::Approx(12.5));
    CHECK(parsed.rescale_intercept == -1024.0);
    CHECK(parsed.rescale_slope == 1.0);
    CHECK_FALSE(parsed.rescale_defaulted);
}

TEST_CASE("dicom encode-parse-encode is byte identical") {
    RawSlice s = make_slice(3, 5, std::vector<int32_t>(15, -42));
    s.instance_number = 1;
    s.rescale_slope = 2.0;
    s.rescale_intercept = -1024.0;
    const auto bytes = encode_dicom_slice(s);
    const auto again = encode_dicom_slice(parse_dicom_slice(bytes));
    CHECK(bytes == again);
}

TEST_CASE("dicom missing DICM magic") {
    auto bytes = encode_dicom_slice(make_slice(2, 2, {0, 1, 2, 3}));
    bytes[130] = 'X';
    expect_error(ErrorCode::MissingMagic, [&] { parse_dicom_slice(bytes); });
    expect_error(ErrorCode::MissingMagic, [&] { parse_dicom_slice(std::vector<uint8_t>(10, 0)); });
}

TEST_CASE("dicom unsupported transfer syntax") {
    auto bytes = encode_dicom_slice(make_slice(2, 2, {0, 1, 2, 3}));
    // the implicit-VR little endian UID has the same length as the explicit one
    const std::string target = "1.2.840.10008.1.2.1";
    const std::string replacement = "1.2.840.10008.1.2\0\0";
    auto it = std::search(bytes.begin(), bytes.end(), target.begin(), target.end());
    REQUIRE(it != bytes.end());
    std::memcpy(&*it, replacement.data(), target.size());
    expect_error(ErrorCode::UnsupportedTransferSyntax, [&] { parse_dicom_slice(bytes); });
}

TEST_CASE("dicom truncated pixel data") {
    auto bytes = encode_dicom_slice(make_slice(4, 4, std::vector<int32_t>(16, 5)));
    bytes.resize(bytes.size() - 6);
    expect_error(ErrorCode::TruncatedPixelData, [&] { parse_dicom_slice(bytes); });
}

TEST_CASE("dicom missing rescale tags defaults with warning flag") {
    RawSlice s = make_slice(2, 2, {10, 20, 30, 40});
    s.rescale_defaulted = true;  // encoder omits the tags
    const RawSlice parsed = parse_dicom_slice(encode_dicom_slice(s));
    CHECK(parsed.rescale_defaulted);
    CHECK(parsed.rescale_slope == 1.0);
    CHECK(parsed.rescale_intercept == 0.0);
}

TEST_CASE("dicom rejects BitsAllocated != 16") {
    auto bytes = encode_dicom_slice(make_slice(2, 2, {0, 0, 0, 0}));
    // patch the BitsAllocated value in place: tag (0028,0100), US, value 16
    const uint8_t pattern[] = {0x28, 0x00, 0x00, 0x01, 'U', 'S', 0x02, 0x00, 16, 0};
    auto it = std::search(bytes.begin(), bytes.end(), std::begin(pattern), std::end(pattern));
    REQUIRE(it != bytes.end());
    *(it + 8) = 8;
    expect_error(ErrorCode::UnsupportedBitsAllocated, [&] { parse_dicom_slice(bytes); });
}

TEST_CASE("to_hu applies the linear rescale") {
    RawSlice s = make_slice(1, 3, {-1000, 424, 12});

    SUBCASE("identity rescale") {
        const HuSlice hu = to_hu(s);
        CHECK(hu.at(0, 0) == -1000);
    }
    SUBCASE("ct rescale lands on the lung band upper bound") {
        s.rescale_intercept = -1024.0;
        const HuSlice hu = to_hu(s);
        CHECK(hu.at(0, 1) == -600);
    }
    SUBCASE("slope 2 rescale lands on air") {
        s.rescale_slope = 2.0;
        s.rescale_intercept = -1024.0;
        const HuSlice hu = to_hu(s);
        CHECK(hu.at(0, 2) == -1000);
    }
}

TEST_CASE("to_hu is affine in the stored values") {
    Rng rng(20240901);
    for (int trial = 0; trial < 500; ++trial) {
        const int32_t stored =
            static_cast<int32_t>(rng.next_below(65536)) - 32768;
        const double slope = rng.uniform(0.25, 4.0);
        const double intercept = rng.uniform(-2000.0, 100.0);

        RawSlice scaled = make_slice(1, 1, {stored});
        scaled.rescale_slope = slope;
        scaled.rescale_intercept = intercept;

        // pre-scaling the stored value and using slope 1 must agree
        const double pre = slope * stored;
        const int32_t direct = to_hu(scaled).at(0, 0);
        const int32_t expected = static_cast<int32_t>(std::llround(pre + intercept));
        CHECK(direct == expected);
    }
}

TEST_CASE("assemble_series sorts by instance number") {
    std::vector<RawSlice> slices;
    for (int n : {3, 1, 2}) {
        RawSlice s = make_slice(2, 2, {n, n, n, n});
        s.instance_number = n;
        slices.push_back(s);
    }
    const HuVolume vol = assemble_series(slices, "p");
    REQUIRE(vol.slice_count() == 3);
    CHECK(vol.slices[0].at(0, 0) == 1);
    CHECK(vol.slices[1].at(0, 0) == 2);
    CHECK(vol.slices[2].at(0, 0) == 3);
}

TEST_CASE("assemble_series prefers slice_location when complete") {
    std::vector<RawSlice> slices;
    // instance numbers say one order, locations the opposite
    for (int n : {1, 2, 3}) {
        RawSlice s = make_slice(2, 2, {n, n, n, n});
        s.instance_number = n;
        s.slice_location = -10.0 * n;
        slices.push_back(s);
    }
    const HuVolume vol = assemble_series(slices, "p");
    CHECK(vol.slices[0].at(0, 0) == 3);
    CHECK(vol.slices[2].at(0, 0) == 1);
}

TEST_CASE("assemble_series error paths") {
    expect_error(ErrorCode::EmptySeries, [] { assemble_series({}, "p"); });

    std::vector<RawSlice> mixed;
    RawSlice a = make_slice(4, 4, std::vector<int32_t>(16, 0));
    a.instance_number = 1;
    RawSlice b = make_slice(2, 2, {0, 0, 0, 0});
    b.instance_number = 2;
    mixed = {a, b};
    expect_error(ErrorCode::InconsistentDimensions, [&] { assemble_series(mixed, "p"); });

    RawSlice c = a;
    std::vector<RawSlice> dup = {a, c};
    expect_error(ErrorCode::DuplicateSortKey, [&] { assemble_series(dup, "p"); });
}

TEST_CASE("assemble_series output is a permutation of its input") {
    Rng rng(7);
    std::vector<RawSlice> slices;
    std::vector<int32_t> payloads;
    for (int i = 0; i < 24; ++i) {
        const int32_t v = static_cast<int32_t>(rng.next_below(1000));
        RawSlice s = make_slice(2, 2, {v, v, v, v});
        s.instance_number = 100 - i;  // reversed order
        slices.push_back(s);
        payloads.push_back(v);
    }
    const HuVolume vol = assemble_series(slices, "p");
    std::vector<int32_t> seen;
    for (const auto& sl : vol.slices) seen.push_back(sl.at(0, 0));
    std::sort(payloads.begin(), payloads.end());
    std::vector<int32_t> sorted_seen = seen;
    std::sort(sorted_seen.begin(), sorted_seen.end());
    CHECK(payloads == sorted_seen);  // nothing lost or duplicated
}

TEST_CASE("load_series reads 36 slices from disk") {
    TempDir dir("series36");
    for (int i = 0; i < 36; ++i) {
        RawSlice s = make_slice(8, 8, std::vector<int32_t>(64, i));
        s.instance_number = 36 - i;
        char name[32];
        std::snprintf(name, sizeof name, "slice_%02d.dcm", i);
        write_file_bytes(dir.path / name, encode_dicom_slice(s));
    }
    const HuVolume vol = load_series(dir.path);
    CHECK(vol.slice_count() == 36);
    CHECK(vol.patient_id == dir.path.filename().string());
    CHECK(vol.slices.front().at(0, 0) == 35);  // instance 1 was payload 35
}

// --- NIfTI -------------------------------------------------------------------

TEST_CASE("nifti all-zero payload parses to an unlabeled mask") {
    const LabelMask zero(4, 4, 2);
    const LabelMask parsed = parse_nifti_labels(encode_nifti_labels(zero), VolumeDims{2, 4, 4});
    for (const auto& slice : parsed.slices)
        for (uint8_t v : slice.data) CHECK(v == 0);
}

TEST_CASE("nifti bad header is rejected") {
    LabelMask m(4, 4, 1);
    auto bytes = encode_nifti_labels(m);

    SUBCASE("wrong sizeof_hdr") {
        bytes[0] = 300 & 0xff;
        bytes[1] = 300 >> 8;
        expect_error(ErrorCode::BadHeader, [&] { parse_nifti_labels(bytes, VolumeDims{1, 4, 4}); });
    }
    SUBCASE("wrong magic") {
        bytes[344] = 'x';
        expect_error(ErrorCode::BadHeader, [&] { parse_nifti_labels(bytes, VolumeDims{1, 4, 4}); });
    }
    SUBCASE("unsupported datatype") {
        bytes[70] = 16;  // float32
        expect_error(ErrorCode::UnsupportedDatatype,
                     [&] { parse_nifti_labels(bytes, VolumeDims{1, 4, 4}); });
    }
    SUBCASE("dim mismatch") {
        expect_error(ErrorCode::DimMismatch, [&] { parse_nifti_labels(bytes, VolumeDims{1, 8, 8}); });
    }
    SUBCASE("unknown label code") {
        bytes[352 + 5] = 4;
        expect_error(ErrorCode::UnknownLabelCode,
                     [&] { parse_nifti_labels(bytes, VolumeDims{1, 4, 4}); });
    }
}

TEST_CASE("nifti single honeycombing voxel survives the round trip") {
    LabelMask m(4, 4, 2);
    m.slices[1].at(2, 3) = static_cast<uint8_t>(TissueClass::Honeycombing);
    const LabelMask parsed = parse_nifti_labels(encode_nifti_labels(m), VolumeDims{2, 4, 4});
    int honeycomb_count = 0;
    for (int s = 0; s < 2; ++s)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                if (parsed.at(s, r, c) == TissueClass::Honeycombing) {
                    ++honeycomb_count;
                    CHECK(s == 1);
                    CHECK(r == 2);
                    CHECK(c == 3);
                }
    CHECK(honeycomb_count == 1);
    CHECK(parsed == m);
}

TEST_CASE("nifti random label payload round-trips bit exactly") {
    Rng rng(99);
    LabelMask m(6, 5, 3);
    for (auto& slice : m.slices)
        for (auto& v : slice.data) v = static_cast<uint8_t>(rng.next_below(4));
    CHECK(parse_nifti_labels(encode_nifti_labels(m), VolumeDims{3, 6, 5}) == m);

    BinaryMask b(6, 5, 3);
    for (auto& slice : b.slices)
        for (auto& v : slice.data) v = static_cast<uint8_t>(rng.next_below(2));
    CHECK(parse_nifti_mask(encode_nifti_mask(b), VolumeDims{3, 6, 5}) == b);
}

TEST_CASE("nifti int16 datatype is accepted") {
    LabelMask m(2, 2, 1);
    m.slices[0].at(0, 1) = 2;
    auto bytes = encode_nifti_labels(m);
    // rewrite as int16: widen the payload
    std::vector<uint8_t> wide(bytes.begin(), bytes.begin() + 352);
    wide[70] = 4;   // datatype int16
    wide[72] = 16;  // bitpix
    for (size_t i = 352; i < bytes.size(); ++i) {
        wide.push_back(bytes[i]);
        wide.push_back(0);
    }
    const LabelMask parsed = parse_nifti_labels(wide, VolumeDims{1, 2, 2});
    CHECK(parsed == m);
}
