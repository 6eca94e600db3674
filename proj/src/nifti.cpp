#include "ipfcad/nifti.hpp"

#include <cstring>

namespace ipfcad {

namespace {

constexpr int32_t kHeaderSize = 348;
constexpr int16_t kDatatypeUint8 = 2;
constexpr int16_t kDatatypeInt16 = 4;

// Field offsets within the 348-byte NIfTI-1 header.
constexpr size_t kOffSizeofHdr = 0;
constexpr size_t kOffDim = 40;        // int16 dim[8]
constexpr size_t kOffDatatype = 70;   // int16
constexpr size_t kOffBitpix = 72;     // int16
constexpr size_t kOffVoxOffset = 108; // float32
constexpr size_t kOffMagic = 344;     // char[4]

int16_t read_i16(const std::vector<uint8_t>& b, size_t off) {
    return static_cast<int16_t>(static_cast<uint16_t>(b[off]) | static_cast<uint16_t>(b[off + 1]) << 8);
}
int32_t read_i32(const std::vector<uint8_t>& b, size_t off) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[off + i];
    return static_cast<int32_t>(v);
}
float read_f32(const std::vector<uint8_t>& b, size_t off) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[off + i];
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}
void put_i16(std::vector<uint8_t>& b, size_t off, int16_t v) {
    b[off] = static_cast<uint8_t>(v);
    b[off + 1] = static_cast<uint8_t>(static_cast<uint16_t>(v) >> 8);
}
void put_i32(std::vector<uint8_t>& b, size_t off, int32_t v) {
    for (int i = 0; i < 4; ++i) b[off + i] = static_cast<uint8_t>(static_cast<uint32_t>(v) >> (8 * i));
}
void put_f32(std::vector<uint8_t>& b, size_t off, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    for (int i = 0; i < 4; ++i) b[off + i] = static_cast<uint8_t>(v >> (8 * i));
}

struct Parsed {
    VolumeDims dims;
    int16_t datatype = 0;
    size_t data_offset = 0;
};

Parsed parse_header(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < static_cast<size_t>(kHeaderSize))
        raise(ErrorCode::BadHeader, "file shorter than the 348-byte NIfTI-1 header");
    const int32_t sizeof_hdr = read_i32(bytes, kOffSizeofHdr);
    if (sizeof_hdr != kHeaderSize) {
        if (sizeof_hdr == 1543569408)  // 348 byte-swapped
            raise(ErrorCode::BadHeader, "big-endian NIfTI is not supported");
        raise(ErrorCode::BadHeader, "sizeof_hdr=" + std::to_string(sizeof_hdr) + ", expected 348");
    }
    const char* magic = reinterpret_cast<const char*>(bytes.data() + kOffMagic);
    if (std::memcmp(magic, "n+1\0", 4) != 0 && std::memcmp(magic, "ni1\0", 4) != 0)
        raise(ErrorCode::BadHeader, "magic is neither \"n+1\" nor \"ni1\"");

    const int16_t ndim = read_i16(bytes, kOffDim);
    if (ndim < 3 || ndim > 7)
        raise(ErrorCode::BadHeader, "dim[0]=" + std::to_string(ndim) + ", need 3-D data");
    const int16_t nx = read_i16(bytes, kOffDim + 2);
    const int16_t ny = read_i16(bytes, kOffDim + 4);
    const int16_t nz = read_i16(bytes, kOffDim + 6);
    for (int d = 4; d <= ndim; ++d) {
        if (read_i16(bytes, kOffDim + 2 * static_cast<size_t>(d)) > 1)
            raise(ErrorCode::BadHeader, "higher dimensions must be 1");
    }
    if (nx <= 0 || ny <= 0 || nz <= 0)
        raise(ErrorCode::BadHeader, "non-positive dimension in header");

    Parsed p;
    p.dims = VolumeDims{nz, ny, nx};
    p.datatype = read_i16(bytes, kOffDatatype);
    if (p.datatype != kDatatypeUint8 && p.datatype != kDatatypeInt16)
        raise(ErrorCode::UnsupportedDatatype,
              "datatype=" + std::to_string(p.datatype) + " (only uint8=2 and int16=4 are supported)");

    const float vox_offset = read_f32(bytes, kOffVoxOffset);
    if (vox_offset < kHeaderSize || vox_offset != static_cast<float>(static_cast<size_t>(vox_offset)))
        raise(ErrorCode::BadHeader, "invalid vox_offset");
    p.data_offset = static_cast<size_t>(vox_offset);

    const size_t voxels = static_cast<size_t>(nx) * ny * nz;
    const size_t bytes_per = p.datatype == kDatatypeUint8 ? 1 : 2;
    if (p.data_offset + voxels * bytes_per > bytes.size())
        raise(ErrorCode::BadHeader, "voxel payload shorter than header promises");
    return p;
}

int32_t voxel_value(const std::vector<uint8_t>& bytes, const Parsed& p, size_t index) {
    if (p.datatype == kDatatypeUint8) return bytes[p.data_offset + index];
    return read_i16(bytes, p.data_offset + 2 * index);
}

std::vector<uint8_t> make_header(const VolumeDims& d, int16_t datatype) {
    std::vector<uint8_t> h(kHeaderSize + 4, 0);  // header + 4-byte extender
    put_i32(h, kOffSizeofHdr, kHeaderSize);
    put_i16(h, kOffDim, 3);
    put_i16(h, kOffDim + 2, static_cast<int16_t>(d.cols));
    put_i16(h, kOffDim + 4, static_cast<int16_t>(d.rows));
    put_i16(h, kOffDim + 6, static_cast<int16_t>(d.slices));
    for (int i = 4; i < 8; ++i) put_i16(h, kOffDim + 2 * static_cast<size_t>(i), 1);
    put_i16(h, kOffDatatype, datatype);
    put_i16(h, kOffBitpix, datatype == kDatatypeUint8 ? 8 : 16);
    // pixdim[0..3]: unit spacing keeps viewers happy
    for (int i = 0; i < 4; ++i) put_f32(h, 76 + 4 * static_cast<size_t>(i), 1.0f);
    put_f32(h, kOffVoxOffset, 352.0f);
    std::memcpy(h.data() + kOffMagic, "n+1\0", 4);
    return h;
}

}  // namespace

LabelMask parse_nifti_labels(const std::vector<uint8_t>& bytes, const VolumeDims& expected_dims) {
    const Parsed p = parse_header(bytes);
    if (!(p.dims == expected_dims))
        raise(ErrorCode::DimMismatch,
              "label volume is " + std::to_string(p.dims.slices) + "x" + std::to_string(p.dims.rows) + "x" +
                  std::to_string(p.dims.cols) + ", expected " + std::to_string(expected_dims.slices) + "x" +
                  std::to_string(expected_dims.rows) + "x" + std::to_string(expected_dims.cols));

    LabelMask labels(p.dims.rows, p.dims.cols, p.dims.slices);
    size_t idx = 0;
    for (int s = 0; s < p.dims.slices; ++s)
        for (int r = 0; r < p.dims.rows; ++r)
            for (int c = 0; c < p.dims.cols; ++c, ++idx) {
                const int32_t v = voxel_value(bytes, p, idx);
                if (v < 0 || v > 3)
                    raise(ErrorCode::UnknownLabelCode,
                          "voxel value " + std::to_string(v) + " is outside the 0-3 label map");
                labels.slices[s].at(r, c) = static_cast<uint8_t>(v);
            }
    return labels;
}

BinaryMask parse_nifti_mask(const std::vector<uint8_t>& bytes, const VolumeDims& expected_dims) {
    const Parsed p = parse_header(bytes);
    if (!(p.dims == expected_dims))
        raise(ErrorCode::DimMismatch, "mask dims do not match the paired volume");

    BinaryMask mask(p.dims.rows, p.dims.cols, p.dims.slices);
    size_t idx = 0;
    for (int s = 0; s < p.dims.slices; ++s)
        for (int r = 0; r < p.dims.rows; ++r)
            for (int c = 0; c < p.dims.cols; ++c, ++idx)
                mask.slices[s].at(r, c) = voxel_value(bytes, p, idx) != 0 ? 1 : 0;
    return mask;
}

std::vector<uint8_t> encode_nifti_labels(const LabelMask& labels) {
    std::vector<uint8_t> out =
        make_header(VolumeDims{labels.slice_count(), labels.rows, labels.cols}, kDatatypeUint8);
    out.reserve(out.size() + static_cast<size_t>(labels.slice_count()) * labels.rows * labels.cols);
    for (const auto& slice : labels.slices)
        out.insert(out.end(), slice.data.begin(), slice.data.end());
    return out;
}

std::vector<uint8_t> encode_nifti_mask(const BinaryMask& mask) {
    std::vector<uint8_t> out =
        make_header(VolumeDims{mask.slice_count(), mask.rows, mask.cols}, kDatatypeUint8);
    for (const auto& slice : mask.slices)
        for (uint8_t v : slice.data) out.push_back(v ? 1 : 0);
    return out;
}

}  // namespace ipfcad
