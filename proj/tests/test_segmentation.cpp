#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <tuple>

#include "ipfcad/phantom.hpp"
#include "ipfcad/rng.hpp"
#include "ipfcad/segmentation.hpp"
#include "helpers.hpp"

using namespace ipfcad;
using ipfcad::test::expect_error;

namespace {

// Independent Dice oracle: coordinate sets and std::set intersection.
double dice_bruteforce(const BinaryMask& a, const BinaryMask& b) {
    std::set<std::tuple<int, int, int>> sa, sb;
    for (int s = 0; s < a.slice_count(); ++s)
        for (int r = 0; r < a.rows; ++r)
            for (int c = 0; c < a.cols; ++c) {
                if (a.slices[s].at(r, c)) sa.insert({s, r, c});
                if (b.slices[s].at(r, c)) sb.insert({s, r, c});
            }
    uint64_t inter = 0;
    for (const auto& p : sa) inter += sb.count(p);
    if (sa.empty() && sb.empty()) return 1.0;
    return static_cast<double>(2 * inter) / static_cast<double>(sa.size() + sb.size());
}

BinaryMask single_slice_mask(const MaskSlice& slice) {
    BinaryMask m;
    m.rows = slice.rows;
    m.cols = slice.cols;
    m.slices = {slice};
    return m;
}

BinaryMask random_mask(Rng& rng, int rows, int cols, double density) {
    BinaryMask m(rows, cols, 1);
    for (auto& v : m.slices[0].data) v = rng.next_double() < density ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("window_enrich maps the window linearly") {
    HuSlice slice(1, 3);
    slice.at(0, 0) = -600;   // center
    slice.at(0, 1) = -1350;  // below the floor
    slice.at(0, 2) = 500;    // above the ceiling
    const auto img = window_enrich(slice, -600, 1500);
    CHECK(img.at(0, 0) == 128);  // midpoint, round(127.5)=128
    CHECK(img.at(0, 1) == 0);
    CHECK(img.at(0, 2) == 255);

    expect_error(ErrorCode::ZeroWidth, [&] { window_enrich(slice, -600, 0); });
}

TEST_CASE("connected_components basic shapes") {
    SUBCASE("empty mask has no components") {
        const auto cm = connected_components(MaskSlice(5, 5, 0), 8);
        CHECK(cm.components.empty());
    }
    SUBCASE("two disjoint squares") {
        MaskSlice m(8, 8, 0);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                m.at(1 + r, 1 + c) = 1;
                m.at(5 + r, 5 + c) = 1;
            }
        const auto cm = connected_components(m, 8);
        REQUIRE(cm.components.size() == 2);
        CHECK(cm.components[0].area == 4);
        CHECK(cm.components[1].area == 4);
        CHECK_FALSE(cm.components[0].touches_border);
    }
    SUBCASE("full mask is one border component") {
        const auto cm = connected_components(MaskSlice(6, 6, 1), 8);
        REQUIRE(cm.components.size() == 1);
        CHECK(cm.components[0].area == 36);
        CHECK(cm.components[0].touches_border);
    }
    SUBCASE("diagonal pixels: connected under 8, split under 4") {
        MaskSlice m(4, 4, 0);
        m.at(1, 1) = 1;
        m.at(2, 2) = 1;
        CHECK(connected_components(m, 8).components.size() == 1);
        CHECK(connected_components(m, 4).components.size() == 2);
    }
}

TEST_CASE("connected_components areas sum to mask cardinality") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask m = random_mask(rng, 32, 32, 0.4);
        const auto cm = connected_components(m.slices[0], 8);
        uint64_t total = 0;
        for (const auto& comp : cm.components) total += comp.area;
        CHECK(total == m.cardinality());
        // every true pixel belongs to exactly one component
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                CHECK((m.slices[0].at(r, c) != 0) == (cm.labels.at(r, c) != 0));
    }
}

TEST_CASE("segment_lungs recovers phantom lungs") {
    PhantomSpec spec;
    spec.slice_count = 2;
    spec.rng_seed = 5;
    const PhantomResult phantom = generate_phantom(spec);
    const BinaryMask mask = segment_lungs(phantom.volume, SegmentationParams{});
    CHECK(dice(mask, phantom.truth_lungs) >= 0.95);
}

TEST_CASE("segment_lungs returns empty mask on all-tissue slices") {
    HuVolume vol;
    vol.rows = vol.cols = 32;
    vol.slices = {HuSlice(32, 32, 40)};
    const BinaryMask mask = segment_lungs(vol, SegmentationParams{});
    CHECK(mask.cardinality() == 0);
}

TEST_CASE("segment_lungs drops specks below the area floor") {
    // lung-like blob plus a 3-px speck, both enclosed by tissue (not border air)
    HuVolume vol;
    vol.rows = vol.cols = 64;
    HuSlice slice(64, 64, 40);
    for (int r = 10; r < 40; ++r)
        for (int c = 10; c < 40; ++c) slice.at(r, c) = -650;
    slice.at(50, 50) = slice.at(50, 51) = slice.at(51, 50) = -650;
    vol.slices = {slice};

    SegmentationParams params;
    const BinaryMask mask = segment_lungs(vol, params);
    CHECK(mask.slices[0].at(20, 20) == 1);
    CHECK(mask.slices[0].at(50, 50) == 0);  // speck removed
    CHECK(mask.cardinality() == 30 * 30);

    params.min_object_area_px = 1;
    const BinaryMask mask_keep = segment_lungs(vol, params);
    CHECK(mask_keep.slices[0].at(50, 50) == 1);  // floor lowered, speck kept
}

TEST_CASE("segment_lungs removes border-connected air and fills holes") {
    HuVolume vol;
    vol.rows = vol.cols = 64;
    HuSlice slice(64, 64, -1000);  // ambient air everywhere
    // tissue ring 8..56, lung 16..48 with a dense 4x4 inclusion
    for (int r = 8; r < 56; ++r)
        for (int c = 8; c < 56; ++c) slice.at(r, c) = 40;
    for (int r = 16; r < 48; ++r)
        for (int c = 16; c < 48; ++c) slice.at(r, c) = -650;
    for (int r = 30; r < 34; ++r)
        for (int c = 30; c < 34; ++c) slice.at(r, c) = -200;  // fibrotic wall
    vol.slices = {slice};

    SegmentationParams params;
    const BinaryMask mask = segment_lungs(vol, params);
    CHECK(mask.slices[0].at(0, 0) == 0);    // ambient air gone
    CHECK(mask.slices[0].at(10, 10) == 0);  // tissue is not lung
    CHECK(mask.slices[0].at(20, 20) == 1);
    CHECK(mask.slices[0].at(31, 31) == 1);  // hole filled
    CHECK(mask.cardinality() == 32 * 32);

    params.fill_holes = false;
    const BinaryMask unfilled = segment_lungs(vol, params);
    CHECK(unfilled.slices[0].at(31, 31) == 0);
    CHECK(unfilled.cardinality() == 32 * 32 - 16);

    expect_error(ErrorCode::EmptyVolume, [&] { segment_lungs(HuVolume{}, params); });
}

TEST_CASE("segmented mask stays inside candidate-or-hole voxels, never border air") {
    PhantomSpec spec;
    spec.slice_count = 1;
    spec.rng_seed = 11;
    const PhantomResult phantom = generate_phantom(spec);
    const SegmentationParams params;
    const BinaryMask mask = segment_lungs(phantom.volume, params);

    const HuSlice& slice = phantom.volume.slices[0];
    MaskSlice candidate(slice.rows, slice.cols, 0);
    for (size_t i = 0; i < slice.data.size(); ++i)
        candidate.data[i] = slice.data[i] <= params.air_threshold_hu;
    const auto cm = connected_components(candidate, 8);
    for (int r = 0; r < slice.rows; ++r)
        for (int c = 0; c < slice.cols; ++c) {
            if (!mask.slices[0].at(r, c)) continue;
            const int32_t label = cm.labels.at(r, c);
            if (label != 0) {
                // candidate voxel: its component must not touch the border
                CHECK_FALSE(cm.components[static_cast<size_t>(label - 1)].touches_border);
            }
            // else: a filled hole, which is fine by construction
        }
}

TEST_CASE("apply_mask keeps inside and sentinels outside") {
    HuVolume vol;
    vol.rows = vol.cols = 4;
    vol.slices = {HuSlice(4, 4, -650)};

    SUBCASE("full-true mask is identity") {
        BinaryMask full(4, 4, 1);
        for (auto& v : full.slices[0].data) v = 1;
        CHECK(apply_mask(vol, full, -2048) == vol);
    }
    SUBCASE("full-false mask sentinels everything") {
        const BinaryMask empty(4, 4, 1);
        const HuVolume out = apply_mask(vol, empty, -2048);
        for (int32_t v : out.slices[0].data) CHECK(v == -2048);
    }
    SUBCASE("checkerboard alternates value and sentinel") {
        BinaryMask checker(4, 4, 1);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) checker.slices[0].at(r, c) = (r + c) % 2;
        const HuVolume out = apply_mask(vol, checker, -2048);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                CHECK(out.slices[0].at(r, c) == ((r + c) % 2 ? -650 : -2048));
    }
    SUBCASE("dim mismatch") {
        expect_error(ErrorCode::DimMismatch, [&] { apply_mask(vol, BinaryMask(8, 8, 1), -2048); });
    }
}

TEST_CASE("apply_mask then re-threshold recovers the mask exactly") {
    Rng rng(17);
    PhantomSpec spec;
    spec.slice_count = 2;
    spec.rng_seed = 23;
    const PhantomResult phantom = generate_phantom(spec);
    const HuVolume masked = apply_mask(phantom.volume, phantom.truth_lungs, -2048);
    BinaryMask recovered(masked.rows, masked.cols, masked.slice_count());
    for (int s = 0; s < masked.slice_count(); ++s)
        for (size_t i = 0; i < masked.slices[s].data.size(); ++i)
            recovered.slices[s].data[i] = masked.slices[s].data[i] > -2048;
    CHECK(recovered == phantom.truth_lungs);
}

TEST_CASE("dice hand-checked values") {
    MaskSlice a(4, 4, 0), b(4, 4, 0);
    // |A|=4, |B|=4, overlap 2
    a.at(0, 0) = a.at(0, 1) = a.at(0, 2) = a.at(0, 3) = 1;
    b.at(0, 2) = b.at(0, 3) = b.at(1, 0) = b.at(1, 1) = 1;
    CHECK(dice(single_slice_mask(a), single_slice_mask(b)) == 0.5);

    CHECK(dice(single_slice_mask(a), single_slice_mask(a)) == 1.0);

    MaskSlice disjoint(4, 4, 0);
    disjoint.at(3, 3) = 1;
    CHECK(dice(single_slice_mask(a), single_slice_mask(disjoint)) == 0.0);

    CHECK(dice(BinaryMask(4, 4, 1), BinaryMask(4, 4, 1)) == 1.0);  // both empty

    expect_error(ErrorCode::DimMismatch,
                 [&] { dice(single_slice_mask(a), BinaryMask(5, 5, 1)); });
}

TEST_CASE("dice equals the brute-force set oracle on 200 random pairs") {
    Rng rng(20240911);
    for (int trial = 0; trial < 200; ++trial) {
        const BinaryMask a = random_mask(rng, 64, 64, rng.uniform(0.05, 0.9));
        const BinaryMask b = random_mask(rng, 64, 64, rng.uniform(0.05, 0.9));
        const double fast = dice(a, b);
        CHECK(fast == dice_bruteforce(a, b));  // exact, same division
        CHECK(fast == dice(b, a));             // symmetry
        CHECK(dice(a, a) == 1.0);
    }
}

TEST_CASE("dice grows with overlap at fixed cardinalities") {
    // slide a 4-px bar across another: overlap 0,1,2,3,4
    double prev = -1.0;
    for (int shift = 4; shift >= 0; --shift) {
        MaskSlice a(1, 12, 0), b(1, 12, 0);
        for (int i = 0; i < 4; ++i) {
            a.at(0, i) = 1;
            b.at(0, i + shift) = 1;
        }
        const double d = dice(single_slice_mask(a), single_slice_mask(b));
        CHECK(d > prev);
        prev = d;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("pgm export shape and payload") {
    MaskSlice m(2, 3, 0);
    m.at(0, 0) = 1;
    const auto bytes = encode_pgm(m);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
    CHECK(bytes[header.size()] == 255);
    CHECK(bytes[header.size() + 1] == 0);
}
