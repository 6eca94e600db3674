#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ipfcad/image.hpp"

namespace ipfcad {

// One parsed CT slice, still in stored (pre-rescale) values.
struct RawSlice {
    int rows = 0;
    int cols = 0;
    int bits_allocated = 16;
    bool pixel_representation_signed = true;
    double rescale_slope = 1.0;
    double rescale_intercept = 0.0;
    bool rescale_defaulted = false;  // set when the rescale tags were absent
    std::optional<int32_t> instance_number;
    std::optional<double> slice_location;
    std::vector<int32_t> stored_values;  // rows*cols, row-major

    int32_t stored_at(int r, int c) const { return stored_values[static_cast<size_t>(r) * cols + c]; }
};

// Supported subset: 128-byte preamble + "DICM", Explicit VR Little Endian,
// uncompressed 16-bit single-frame pixel data.
RawSlice parse_dicom_slice(const std::vector<uint8_t>& bytes);

// Writes a file the parser above accepts. Used by the phantom exporter and as
// the round-trip counterpart in tests.
std::vector<uint8_t> encode_dicom_slice(const RawSlice& slice);

// HU[i,j] = round(slope * stored[i,j] + intercept)
HuSlice to_hu(const RawSlice& raw);

// Orders parsed slices into a volume. Sorts by slice_location when every
// slice carries one, otherwise by instance_number.
HuVolume assemble_series(const std::vector<RawSlice>& slices, const std::string& patient_id);

// Parses every *.dcm file in the directory and assembles the volume. The
// volume's patient_id is the directory name.
HuVolume load_series(const std::filesystem::path& directory);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace ipfcad
