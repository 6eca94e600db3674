#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ipfcad/config.hpp"
#include "helpers.hpp"

using namespace ipfcad;
using ipfcad::test::expect_error;

TEST_CASE("defaults match the published pipeline settings") {
    const PipelineConfig cfg;
    CHECK(cfg.blocking.roi_px == 4);
    CHECK(cfg.blocking.padding_px == 4);
    CHECK(cfg.blocking.block_side() == 12);
    CHECK(cfg.segmentation.air_threshold_hu == -500);
    CHECK(cfg.segmentation.min_object_area_px == 64);
    CHECK(cfg.blocking.balance_ratios == std::array<double, 3>{1.0, 1.5, 2.5});
    CHECK(cfg.training.learning_rate == 0.01);
    CHECK(cfg.training.momentum == 0.9);
    CHECK(cfg.training.batch_size == 32);
    CHECK(cfg.training.dropout_p == 0.5);
}

TEST_CASE("dump and parse round-trip bit exactly") {
    PipelineConfig cfg;
    cfg.blocking.roi_px = 8;
    cfg.blocking.balance_ratios = {1.0, 1.25, 3.75};
    cfg.segmentation.air_threshold_hu = -432;
    cfg.training.learning_rate = 0.00317;
    cfg.training.epochs = 17;
    cfg.seed = 123456789ULL;
    cfg.blocking.rng_seed = cfg.seed;
    cfg.training.rng_seed = cfg.seed;

    const std::string text = dump_config(cfg);
    const PipelineConfig parsed = parse_config(text);
    CHECK(parsed == cfg);
    CHECK(dump_config(parsed) == text);
}

TEST_CASE("comments and blank lines are ignored") {
    const PipelineConfig cfg = parse_config(
        "# a comment\n"
        "\n"
        "roi=6\n"
        "  padding = 3  \n"
        "# another\n"
        "seed=9\n");
    CHECK(cfg.blocking.roi_px == 6);
    CHECK(cfg.blocking.padding_px == 3);
    CHECK(cfg.seed == 9);
    CHECK(cfg.blocking.rng_seed == 9);
    CHECK(cfg.training.rng_seed == 9);
}

TEST_CASE("unknown keys and malformed lines are rejected") {
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("bogus_key=1\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("roi\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("roi=four\n"); });
}

TEST_CASE("module invariants validate parsed values") {
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("roi=0\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("air_threshold_hu=10\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("momentum=1.5\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("dropout_p=1\n"); });
    expect_error(ErrorCode::InvalidArgument, [] { parse_config("min_labeled_fraction=0\n"); });
}

TEST_CASE("architecture spec parses, round-trips and validates") {
    SUBCASE("default spec builds the standard stack") {
        const PipelineConfig cfg;
        const Architecture arch = cfg.make_architecture();
        CHECK(arch.input == Shape3{12, 12, 1});
        CHECK(arch.layers.size() == 12);
        CHECK(arch.class_count() == 3);
    }
    SUBCASE("a variant stack is accepted") {
        PipelineConfig cfg = parse_config(
            "architecture=conv5x8,relu,pool,flatten,dense32,relu,dropout,dense3,softmax\n");
        const Architecture arch = cfg.make_architecture();
        CHECK(arch.layers[0].kernel == 5);
        CHECK(arch.layers[0].filters == 8);
        CHECK(arch.layers[4].in_dim == 6 * 6 * 8);  // inferred from the chain
        CHECK(arch.class_count() == 3);
    }
    SUBCASE("round-trips through dump") {
        PipelineConfig cfg = parse_config(
            "architecture=conv3x4,relu,pool,flatten,dense3,softmax\n");
        CHECK(parse_config(dump_config(cfg)) == cfg);
    }
    SUBCASE("broken stacks are rejected at parse time") {
        expect_error(ErrorCode::InvalidArgument, [] { parse_config("architecture=conv3,relu\n"); });
        expect_error(ErrorCode::InvalidArgument,
                     [] { parse_config("architecture=warp9,softmax\n"); });
        // 12 -> pool -> 6 -> pool -> 3 -> pool is odd
        expect_error(ErrorCode::OddDimension,
                     [] { parse_config("architecture=pool,pool,pool,flatten,dense3,softmax\n"); });
        expect_error(ErrorCode::ShapeChainBroken,
                     [] { parse_config("architecture=flatten,dense3,relu\n"); });
    }
}
