#include "ipfcad/dicom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ipfcad {

namespace {

constexpr size_t kPreambleSize = 128;
constexpr const char* kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";

struct Tag {
    uint16_t group;
    uint16_t element;
    bool operator==(const Tag&) const = default;
};

constexpr Tag kTransferSyntaxUid{0x0002, 0x0010};
constexpr Tag kRows{0x0028, 0x0010};
constexpr Tag kColumns{0x0028, 0x0011};
constexpr Tag kBitsAllocated{0x0028, 0x0100};
constexpr Tag kPixelRepresentation{0x0028, 0x0103};
constexpr Tag kRescaleIntercept{0x0028, 0x1052};
constexpr Tag kRescaleSlope{0x0028, 0x1053};
constexpr Tag kInstanceNumber{0x0020, 0x0013};
constexpr Tag kSliceLocation{0x0020, 0x1041};
constexpr Tag kPixelData{0x7FE0, 0x0010};

class Reader {
  public:
    explicit Reader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

    size_t pos() const { return pos_; }
    size_t remaining() const { return bytes_.size() - pos_; }
    bool at_end() const { return pos_ >= bytes_.size(); }
    void seek(size_t p) { pos_ = p; }

    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(bytes_[pos_]) | static_cast<uint16_t>(bytes_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
        pos_ += 4;
        return v;
    }
    std::string bytes_as_string(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void skip(size_t n) {
        need(n);
        pos_ += n;
    }
    const uint8_t* cursor() const { return bytes_.data() + pos_; }

  private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size())
            raise(ErrorCode::MalformedDicom, "element runs past end of file");
    }
    const std::vector<uint8_t>& bytes_;
    size_t pos_ = 0;
};

bool is_long_form_vr(const std::string& vr) {
    return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" || vr == "UN";
}

struct Element {
    Tag tag;
    std::string vr;
    size_t value_pos;  // offset of the value field
    uint32_t length;
};

// Reads one Explicit VR Little Endian element header, leaving the reader
// positioned at the value.
Element read_element_header(Reader& r) {
    Element e;
    e.tag.group = r.u16();
    e.tag.element = r.u16();
    e.vr = r.bytes_as_string(2);
    for (char c : e.vr) {
        if (c < 'A' || c > 'Z')
            raise(ErrorCode::MalformedDicom, "invalid VR bytes; file is not Explicit VR");
    }
    if (is_long_form_vr(e.vr)) {
        r.skip(2);  // reserved
        e.length = r.u32();
    } else {
        e.length = r.u16();
    }
    e.value_pos = r.pos();
    return e;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \0", 0, 2);
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \0", std::string::npos, 2);
    return s.substr(b, e - b + 1);
}

double parse_decimal_string(const std::string& raw, const char* what) {
    const std::string s = trim(raw);
    try {
        size_t consumed = 0;
        double v = std::stod(s, &consumed);
        if (consumed != s.size())
            raise(ErrorCode::MalformedDicom, std::string("trailing junk in ") + what);
        if (!std::isfinite(v))
            raise(ErrorCode::MalformedDicom, std::string("non-finite value in ") + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        raise(ErrorCode::MalformedDicom, std::string("unparseable numeric value in ") + what);
    }
}

}  // namespace

RawSlice parse_dicom_slice(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kPreambleSize + 4 ||
        std::memcmp(bytes.data() + kPreambleSize, "DICM", 4) != 0)
        raise(ErrorCode::MissingMagic, "no DICM marker at offset 128; not a DICOM file");

    Reader r(bytes);
    r.seek(kPreambleSize + 4);

    RawSlice slice;
    std::optional<uint16_t> rows, cols, bits, pixel_rep;
    std::optional<double> slope, intercept;
    bool have_pixels = false;

    while (!r.at_end()) {
        const Element e = read_element_header(r);

        if (e.tag == kTransferSyntaxUid) {
            const std::string ts = trim(r.bytes_as_string(e.length));
            if (ts != kExplicitVrLittleEndian)
                raise(ErrorCode::UnsupportedTransferSyntax,
                      "transfer syntax '" + ts + "' (only Explicit VR Little Endian uncompressed is supported)");
            continue;
        }
        if (e.tag == kRows) {
            rows = r.u16();
            continue;
        }
        if (e.tag == kColumns) {
            cols = r.u16();
            continue;
        }
        if (e.tag == kBitsAllocated) {
            bits = r.u16();
            continue;
        }
        if (e.tag == kPixelRepresentation) {
            pixel_rep = r.u16();
            continue;
        }
        if (e.tag == kRescaleIntercept) {
            intercept = parse_decimal_string(r.bytes_as_string(e.length), "RescaleIntercept");
            continue;
        }
        if (e.tag == kRescaleSlope) {
            slope = parse_decimal_string(r.bytes_as_string(e.length), "RescaleSlope");
            continue;
        }
        if (e.tag == kInstanceNumber) {
            const std::string s = trim(r.bytes_as_string(e.length));
            slice.instance_number = static_cast<int32_t>(parse_decimal_string(s, "InstanceNumber"));
            continue;
        }
        if (e.tag == kSliceLocation) {
            slice.slice_location = parse_decimal_string(r.bytes_as_string(e.length), "SliceLocation");
            continue;
        }
        if (e.tag == kPixelData) {
            if (!rows || !cols)
                raise(ErrorCode::MalformedDicom, "PixelData before Rows/Columns");
            if (!bits) raise(ErrorCode::MalformedDicom, "missing BitsAllocated");
            if (*bits != 16)
                raise(ErrorCode::UnsupportedBitsAllocated,
                      "BitsAllocated=" + std::to_string(*bits) + " (only 16 is supported)");
            if (e.length > r.remaining())
                raise(ErrorCode::TruncatedPixelData,
                      "declared PixelData length " + std::to_string(e.length) +
                          " exceeds remaining " + std::to_string(r.remaining()) + " bytes");
            const size_t expected = static_cast<size_t>(*rows) * *cols * 2;
            if (e.length != expected)
                raise(ErrorCode::TruncatedPixelData,
                      "PixelData length " + std::to_string(e.length) + " does not match rows*cols*2=" +
                          std::to_string(expected));
            const bool is_signed = pixel_rep.value_or(1) != 0;
            slice.stored_values.resize(static_cast<size_t>(*rows) * *cols);
            const uint8_t* p = r.cursor();
            for (size_t i = 0; i < slice.stored_values.size(); ++i) {
                const uint16_t raw = static_cast<uint16_t>(p[2 * i]) |
                                     static_cast<uint16_t>(p[2 * i + 1]) << 8;
                slice.stored_values[i] =
                    is_signed ? static_cast<int32_t>(static_cast<int16_t>(raw)) : static_cast<int32_t>(raw);
            }
            r.skip(e.length);
            have_pixels = true;
            continue;
        }
        // Unknown tag: skip the value.
        if (e.length > r.remaining())
            raise(ErrorCode::MalformedDicom, "element value runs past end of file");
        r.skip(e.length);
    }

    if (!rows || !cols || !have_pixels)
        raise(ErrorCode::MalformedDicom, "missing Rows, Columns or PixelData");
    if (*rows == 0 || *cols == 0)
        raise(ErrorCode::MalformedDicom, "zero Rows or Columns");
    slice.rows = *rows;
    slice.cols = *cols;
    slice.bits_allocated = *bits;
    slice.pixel_representation_signed = pixel_rep.value_or(1) != 0;
    if (slope && intercept) {
        slice.rescale_slope = *slope;
        slice.rescale_intercept = *intercept;
    } else {
        slice.rescale_slope = slope.value_or(1.0);
        slice.rescale_intercept = intercept.value_or(0.0);
        slice.rescale_defaulted = !(slope && intercept);
    }
    return slice;
}

namespace {

class Writer {
  public:
    void u8(uint8_t v) { out_.push_back(v); }
    void u16(uint16_t v) {
        out_.push_back(static_cast<uint8_t>(v));
        out_.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void text(const std::string& s) { raw(s.data(), s.size()); }

    // Short-form element with string value, space-padded to even length.
    void element_str(Tag tag, const char* vr, std::string value) {
        if (value.size() % 2) value.push_back(vr[0] == 'U' && vr[1] == 'I' ? '\0' : ' ');
        u16(tag.group);
        u16(tag.element);
        text(vr);
        u16(static_cast<uint16_t>(value.size()));
        text(value);
    }

    void element_us(Tag tag, uint16_t value) {
        u16(tag.group);
        u16(tag.element);
        text("US");
        u16(2);
        u16(value);
    }

    std::vector<uint8_t> take() { return std::move(out_); }
    size_t size() const { return out_.size(); }

  private:
    std::vector<uint8_t> out_;
};

std::string format_ds(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

std::vector<uint8_t> encode_dicom_slice(const RawSlice& slice) {
    if (slice.rows <= 0 || slice.cols <= 0)
        raise(ErrorCode::InvalidArgument, "slice dimensions must be positive");
    if (slice.stored_values.size() != static_cast<size_t>(slice.rows) * slice.cols)
        raise(ErrorCode::InvalidArgument, "stored_values length must be rows*cols");
    if (slice.bits_allocated != 16)
        raise(ErrorCode::UnsupportedBitsAllocated, "encoder writes 16-bit data only");

    Writer w;
    w.raw(std::vector<uint8_t>(kPreambleSize, 0).data(), kPreambleSize);
    w.text("DICM");

    // File meta group: just the transfer syntax, preceded by its group length.
    Writer meta;
    meta.element_str(kTransferSyntaxUid, "UI", kExplicitVrLittleEndian);
    const std::vector<uint8_t> meta_bytes = meta.take();
    w.u16(0x0002);
    w.u16(0x0000);
    w.text("UL");
    w.u16(4);
    w.u32(static_cast<uint32_t>(meta_bytes.size()));
    w.raw(meta_bytes.data(), meta_bytes.size());

    // Dataset, tags in ascending order.
    if (slice.instance_number)
        w.element_str(kInstanceNumber, "IS", std::to_string(*slice.instance_number));
    if (slice.slice_location)
        w.element_str(kSliceLocation, "DS", format_ds(*slice.slice_location));
    w.element_us(kRows, static_cast<uint16_t>(slice.rows));
    w.element_us(kColumns, static_cast<uint16_t>(slice.cols));
    w.element_us(kBitsAllocated, 16);
    w.element_us(kPixelRepresentation, slice.pixel_representation_signed ? 1 : 0);
    if (!slice.rescale_defaulted) {
        w.element_str(kRescaleIntercept, "DS", format_ds(slice.rescale_intercept));
        w.element_str(kRescaleSlope, "DS", format_ds(slice.rescale_slope));
    }

    const uint32_t pixel_len = static_cast<uint32_t>(slice.stored_values.size() * 2);
    w.u16(kPixelData.group);
    w.u16(kPixelData.element);
    w.text("OW");
    w.u16(0);  // reserved
    w.u32(pixel_len);
    for (int32_t v : slice.stored_values) {
        const uint16_t raw = slice.pixel_representation_signed
                                 ? static_cast<uint16_t>(static_cast<int16_t>(v))
                                 : static_cast<uint16_t>(v);
        w.u16(raw);
    }
    return w.take();
}

HuSlice to_hu(const RawSlice& raw) {
    HuSlice hu(raw.rows, raw.cols);
    for (size_t i = 0; i < raw.stored_values.size(); ++i) {
        const double v = raw.rescale_slope * raw.stored_values[i] + raw.rescale_intercept;
        hu.data[i] = static_cast<int32_t>(std::llround(v));
    }
    return hu;
}

HuVolume assemble_series(const std::vector<RawSlice>& slices, const std::string& patient_id) {
    if (slices.empty()) raise(ErrorCode::EmptySeries, "series contains no parseable slices");

    const int rows = slices.front().rows;
    const int cols = slices.front().cols;
    for (const RawSlice& s : slices) {
        if (s.rows != rows || s.cols != cols)
            raise(ErrorCode::InconsistentDimensions,
                  "slice is " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                      ", series is " + std::to_string(rows) + "x" + std::to_string(cols));
    }

    const bool all_have_location =
        std::all_of(slices.begin(), slices.end(), [](const RawSlice& s) { return s.slice_location.has_value(); });

    std::vector<size_t> order(slices.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    if (all_have_location) {
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return *slices[a].slice_location < *slices[b].slice_location;
        });
        for (size_t i = 1; i < order.size(); ++i) {
            if (*slices[order[i]].slice_location == *slices[order[i - 1]].slice_location)
                raise(ErrorCode::DuplicateSortKey,
                      "two slices share slice_location " + std::to_string(*slices[order[i]].slice_location));
        }
    } else {
        for (const RawSlice& s : slices) {
            if (!s.instance_number)
                raise(ErrorCode::MalformedDicom,
                      "slice has neither slice_location nor instance_number to sort by");
        }
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return *slices[a].instance_number < *slices[b].instance_number;
        });
        for (size_t i = 1; i < order.size(); ++i) {
            if (*slices[order[i]].instance_number == *slices[order[i - 1]].instance_number)
                raise(ErrorCode::DuplicateSortKey,
                      "two slices share instance_number " + std::to_string(*slices[order[i]].instance_number));
        }
    }

    HuVolume vol;
    vol.patient_id = patient_id;
    vol.rows = rows;
    vol.cols = cols;
    vol.slices.reserve(slices.size());
    for (size_t idx : order) vol.slices.push_back(to_hu(slices[idx]));
    return vol;
}

HuVolume load_series(const std::filesystem::path& directory) {
    std::error_code ec;
    if (!std::filesystem::is_directory(directory, ec))
        raise(ErrorCode::IoFailure, "not a directory: " + directory.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (entry.is_regular_file() && entry.path().extension() == ".dcm")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        raise(ErrorCode::EmptySeries, "no .dcm files in " + directory.string());

    std::vector<RawSlice> slices;
    slices.reserve(files.size());
    for (const auto& f : files) slices.push_back(parse_dicom_slice(read_file_bytes(f)));
    return assemble_series(slices, directory.filename().string());
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace ipfcad
