#pragma once

#include <doctest.h>

#include <filesystem>
#include <string>

#include "ipfcad/error.hpp"

namespace ipfcad::test {

// Asserts that fn throws an ipfcad::Error carrying the expected code.
template <typename Fn>
void expect_error(ErrorCode expected, Fn&& fn) {
    try {
        fn();
        FAIL("expected error ", error_code_name(expected), " but nothing was thrown");
    } catch (const Error& e) {
        CHECK_MESSAGE(e.code() == expected, "expected ", error_code_name(expected), " got ",
                      error_code_name(e.code()), " (", e.what(), ")");
    }
}

// Scratch directory wiped on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("ipfcad_test_" + name);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace ipfcad::test
