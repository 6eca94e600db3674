#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ipfcad/dicom.hpp"
#include "ipfcad/nifti.hpp"
#include "helpers.hpp"

using ipfcad::test::TempDir;

namespace {

std::string g_cli;  // path to the ipfcad binary, from --cli=

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = g_cli + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::vector<uint8_t> slurp(const std::filesystem::path& p) { return ipfcad::read_file_bytes(p); }

}  // namespace

TEST_CASE("cli: phantom + segment end to end") {
    TempDir dir("cli_segment");
    const auto log = dir.path / "log.txt";

    auto gen = run("phantom --patients 2 --out-dir " + (dir.path / "data").string(), log);
    REQUIRE(gen.exit_code == 0);

    const std::string series = (dir.path / "data" / "patient_1").string();
    const std::string truth = (dir.path / "data" / "patient_1_truth_mask.nii").string();
    const std::string mask = (dir.path / "mask.nii").string();

    auto seg = run("segment --input " + series + " --out-mask " + mask + " --ref-mask " + truth, log);
    CHECK(seg.exit_code == 0);
    REQUIRE(seg.output.substr(0, 5) == "dice=");
    CHECK(std::stod(seg.output.substr(5)) >= 0.95);
    CHECK(std::filesystem::exists(mask));
    CHECK(std::filesystem::exists(dir.path / "mask_000.pgm"));
    CHECK(std::filesystem::exists(dir.path / "mask_007.pgm"));

    SUBCASE("second run is byte identical") {
        const auto nifti_1 = slurp(mask);
        const auto pgm_1 = slurp(dir.path / "mask_003.pgm");
        auto seg2 = run("segment --input " + series + " --out-mask " + mask, log);
        CHECK(seg2.exit_code == 0);
        CHECK(slurp(mask) == nifti_1);
        CHECK(slurp(dir.path / "mask_003.pgm") == pgm_1);
    }
    SUBCASE("dimension-mismatched reference mask exits 3") {
        // a truth mask from a different geometry
        auto gen2 = run("phantom --patients 2 --seed 5 --out-dir " + (dir.path / "other").string(), log);
        REQUIRE(gen2.exit_code == 0);
        // patient geometries within one set are jittered but equal-sized;
        // cross-check against a hand-built smaller mask instead
        ipfcad::BinaryMask small(64, 64, 2);
        ipfcad::write_file_bytes(dir.path / "small.nii", ipfcad::encode_nifti_mask(small));
        auto bad = run("segment --input " + series + " --out-mask " + mask + " --ref-mask " +
                           (dir.path / "small.nii").string(),
                       log);
        CHECK(bad.exit_code == 3);
    }
}

TEST_CASE("cli: blocks, train, predict, overlay chain") {
    TempDir dir("cli_chain");
    const auto log = dir.path / "log.txt";
    REQUIRE(run("phantom --patients 2 --out-dir " + (dir.path / "d").string(), log).exit_code == 0);

    const std::string series = (dir.path / "d" / "patient_1").string();
    const std::string labels = (dir.path / "d" / "patient_1_labels.nii").string();
    const std::string blocks = (dir.path / "blocks.ipfb").string();
    const std::string model = (dir.path / "model.ipfm").string();

    SUBCASE("predict before any model exists exits 2") {
        auto r = run("predict --model " + model + " --input " + series + " --out-dir " +
                         (dir.path / "pred").string(),
                     log);
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("model file not found") != std::string::npos);
    }

    // fast training config
    {
        std::ofstream cfg(dir.path / "fast.cfg");
        cfg << "epochs=2\nbatch_size=32\nseed=11\n";
    }
    const std::string cfg_flag = " --config " + (dir.path / "fast.cfg").string();

    auto blk = run("blocks --input " + series + " --labels " + labels + " --patient-id 1 --out " +
                       blocks + cfg_flag,
                   log);
    REQUIRE(blk.exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "blocks.manifest.csv"));

    auto tr = run("train --blocks " + blocks + " --out " + model + " --history " +
                      (dir.path / "hist.csv").string() + cfg_flag,
                  log);
    REQUIRE(tr.exit_code == 0);
    CHECK(std::filesystem::exists(model));

    SUBCASE("training twice with one seed is byte identical") {
        const auto first = slurp(model);
        auto tr2 = run("train --blocks " + blocks + " --out " + model + cfg_flag, log);
        REQUIRE(tr2.exit_code == 0);
        CHECK(slurp(model) == first);
    }

    auto pred = run("predict --model " + model + " --input " + series + " --out-dir " +
                        (dir.path / "pred").string() + cfg_flag,
                    log);
    REQUIRE(pred.exit_code == 0);
    const auto map_path = dir.path / "pred" / "classmap_000.txt";
    REQUIRE(std::filesystem::exists(map_path));

    auto ov = run("overlay --dicom " + (dir.path / "d" / "patient_1" / "slice_000.dcm").string() +
                      " --map " + map_path.string() + " --out " + (dir.path / "o.png").string(),
                  log);
    CHECK(ov.exit_code == 0);
    const auto png = slurp(dir.path / "o.png");
    REQUIRE(png.size() > 8);
    CHECK(png[1] == 'P');
    CHECK(png[2] == 'N');
    CHECK(png[3] == 'G');
}

TEST_CASE("cli: evaluate report footer matches hand-recomputed weighted average") {
    TempDir dir("cli_evaluate");
    const auto log = dir.path / "log.txt";
    REQUIRE(run("phantom --patients 2 --out-dir " + (dir.path / "d").string(), log).exit_code == 0);
    {
        std::ofstream cfg(dir.path / "fast.cfg");
        cfg << "epochs=1\nbatch_size=32\nseed=21\nvalidation_fraction=0\n";
    }
    auto ev = run("evaluate --manifest " + (dir.path / "d" / "manifest.csv").string() +
                      " --out-dir " + (dir.path / "out").string() + " --config " +
                      (dir.path / "fast.cfg").string(),
                  log);
    REQUIRE(ev.exit_code == 0);

    std::ifstream csv(dir.path / "out" / "report.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);  // header
    struct Row {
        double sections;
        std::array<double, 3> acc;
        double dice;
    };
    std::vector<Row> rows;
    std::array<double, 4> footer{};
    while (std::getline(csv, line)) {
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        while (f.size() < 6) f.emplace_back();
        if (f[0] == "weighted_average") {
            footer = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])};
            continue;
        }
        rows.push_back(Row{std::stod(f[1]),
                           {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])},
                           std::stod(f[5])});
    }
    REQUIRE(rows.size() == 2);
    for (int c = 0; c < 3; ++c) {
        double num = 0, den = 0;
        for (const Row& r : rows) {
            num += r.acc[static_cast<size_t>(c)] * r.sections;
            den += r.sections;
        }
        CHECK(std::abs(footer[static_cast<size_t>(c)] - num / den) < 1e-12);
    }
    double num = 0, den = 0;
    for (const Row& r : rows) {
        num += r.dice * r.sections;
        den += r.sections;
    }
    CHECK(std::abs(footer[3] - num / den) < 1e-12);

    // counts csv exists and report.txt carries the table
    CHECK(std::filesystem::exists(dir.path / "out" / "counts.csv"));
    std::ifstream table(dir.path / "out" / "report.txt");
    std::stringstream ss;
    ss << table.rdbuf();
    CHECK(ss.str().find("w.average") != std::string::npos);
}

TEST_CASE("cli: dump-config round-trips") {
    TempDir dir("cli_config");
    const auto log = dir.path / "log.txt";
    auto first = run("--dump-config", log);
    REQUIRE(first.exit_code == 0);
    std::ofstream(dir.path / "cfg.txt") << first.output;
    auto second = run("--config " + (dir.path / "cfg.txt").string() + " --dump-config", log);
    CHECK(second.exit_code == 0);
    CHECK(second.output == first.output);
}

TEST_CASE("cli: usage errors exit 2") {
    TempDir dir("cli_usage");
    const auto log = dir.path / "log.txt";
    CHECK(run("segment", log).exit_code == 2);                       // missing required options
    CHECK(run("frobnicate", log).exit_code == 2);                    // unknown subcommand
    CHECK(run("segment --input /nonexistent --out-mask " + (dir.path / "m.nii").string(),
              log).exit_code == 2);
    {
        std::ofstream cfg(dir.path / "bad.cfg");
        cfg << "bogus=1\n";
    }
    CHECK(run("--config " + (dir.path / "bad.cfg").string() + " --dump-config", log).exit_code == 2);
}

int main(int argc, char** argv) {
    doctest::Context context;
    std::vector<char*> passthrough;
    for (int i = 0; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--cli=", 0) == 0)
            g_cli = arg.substr(6);
        else
            passthrough.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli --cli=<path to ipfcad binary>\n");
        return 1;
    }
    context.applyCommandLine(static_cast<int>(passthrough.size()), passthrough.data());
    return context.run();
}
