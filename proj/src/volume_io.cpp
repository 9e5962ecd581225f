#include "pedseg/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "pedseg/error.hpp"

namespace pedseg {
namespace {

namespace fs = std::filesystem;

// Header byte offsets (NIfTI-1).
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffIntentCode = 68;
constexpr std::size_t kOffCalMax = 124;
constexpr std::int16_t kIntentLabel = 1002;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffQoffset = 268;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T byteswap_value(T v) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

// Reads a T at `offset`, swapping from big-endian when `swap` is set.
// Host byte order is assumed little-endian.
template <typename T>
T load(const std::uint8_t* base, std::size_t offset, bool swap) {
    T v;
    std::memcpy(&v, base + offset, sizeof(T));
    return swap ? byteswap_value(v) : v;
}

template <typename T>
void store(std::vector<std::uint8_t>& buf, std::size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

bool has_gzip_magic(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> load_maybe_gzip(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    if (has_gzip_magic(bytes)) return gzip_decompress(bytes);
    return bytes;
}

struct DecodedVolume {
    Grid grid;
    SampleType type = SampleType::float32;
    std::vector<double> values;
    int declared_classes = -1;  // from a NIfTI label intent, if present
};

std::vector<double> decode_samples(const std::uint8_t* src, std::size_t count, SampleType type, bool swap) {
    std::vector<double> out(count);
    const std::size_t width = sample_bytes(type);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t off = n * width;
        switch (type) {
            case SampleType::uint8: out[n] = src[off]; break;
            case SampleType::int8: out[n] = static_cast<std::int8_t>(src[off]); break;
            case SampleType::int16: out[n] = load<std::int16_t>(src, off, swap); break;
            case SampleType::uint16: out[n] = load<std::uint16_t>(src, off, swap); break;
            case SampleType::int32: out[n] = load<std::int32_t>(src, off, swap); break;
            case SampleType::float32: out[n] = load<float>(src, off, swap); break;
            case SampleType::float64: out[n] = load<double>(src, off, swap); break;
        }
    }
    return out;
}

DecodedVolume decode_native(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
    if (bytes.size() < kNativeHeaderBytes) throw TruncationError(path.string() + ": native header truncated");
    const std::uint8_t* p = bytes.data();
    DecodedVolume out;
    out.grid.dims = {load<std::uint32_t>(p, 4, false), load<std::uint32_t>(p, 8, false),
                     load<std::uint32_t>(p, 12, false)};
    out.grid.spacing = {load<float>(p, 16, false), load<float>(p, 20, false), load<float>(p, 24, false)};
    const auto payload = load<std::uint32_t>(p, 28, false);
    if (payload == 1) {
        out.type = SampleType::float32;
    } else if (payload == 2) {
        out.type = SampleType::uint16;
    } else {
        throw FormatError(path.string() + ": unknown native payload code " + std::to_string(payload));
    }
    const std::size_t count = out.grid.dims.count();
    const std::size_t need = kNativeHeaderBytes + count * sample_bytes(out.type);
    if (bytes.size() < need)
        throw TruncationError(path.string() + ": declares " + std::to_string(need) + " bytes, file has " +
                              std::to_string(bytes.size()));
    out.values = decode_samples(p + kNativeHeaderBytes, count, out.type, false);
    return out;
}

fs::path paired_image_path(const fs::path& header_path) {
    std::string s = header_path.string();
    if (ends_with(s, ".hdr.gz")) return s.substr(0, s.size() - 7) + ".img.gz";
    if (ends_with(s, ".hdr")) return s.substr(0, s.size() - 4) + ".img";
    throw FormatError(header_path.string() + ": 'ni1' header without a .hdr extension");
}

DecodedVolume decode_nifti(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
    if (bytes.size() < kNiftiHeaderBytes) throw TruncationError(path.string() + ": NIfTI header truncated");
    const std::uint8_t* p = bytes.data();

    bool swap = false;
    const auto sizeof_hdr = load<std::int32_t>(p, 0, false);
    if (sizeof_hdr != 348) {
        if (byteswap_value(sizeof_hdr) == 348) {
            swap = true;
        } else {
            throw FormatError(path.string() + ": sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
        }
    }

    const bool single_file = std::memcmp(p + kOffMagic, "n+1\0", 4) == 0;
    const bool pair_file = std::memcmp(p + kOffMagic, "ni1\0", 4) == 0;
    if (!single_file && !pair_file) throw FormatError(path.string() + ": missing NIfTI-1 magic");

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(p, kOffDim + 2 * i, swap);
    if (dim[0] < 1 || dim[0] > 7) throw FormatError(path.string() + ": dim[0] out of range");
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[i] > 1) throw FormatError(path.string() + ": only 3D volumes are supported");
    }
    std::array<std::size_t, 3> extent{1, 1, 1};
    for (int i = 1; i <= std::min<int>(3, dim[0]); ++i) {
        if (dim[i] < 1) throw FormatError(path.string() + ": non-positive dim[" + std::to_string(i) + "]");
        extent[i - 1] = static_cast<std::size_t>(dim[i]);
    }

    const auto datatype = load<std::int16_t>(p, kOffDatatype, swap);
    if (!is_sample_type(datatype))
        throw FormatError(path.string() + ": unsupported datatype " + std::to_string(datatype));
    const auto type = static_cast<SampleType>(datatype);
    const auto bitpix = load<std::int16_t>(p, kOffBitpix, swap);
    if (static_cast<std::size_t>(bitpix) != 8 * sample_bytes(type))
        throw FormatError(path.string() + ": bitpix " + std::to_string(bitpix) + " inconsistent with datatype");

    DecodedVolume out;
    out.type = type;
    out.grid.dims = {extent[0], extent[1], extent[2]};
    for (int i = 0; i < 3; ++i) {
        const float s = (i < dim[0]) ? load<float>(p, kOffPixdim + 4 * (i + 1), swap) : 1.0f;
        if (!std::isfinite(s) || s <= 0.0f)
            throw FormatError(path.string() + ": pixdim[" + std::to_string(i + 1) + "] must be positive");
        out.grid.spacing[i] = s;
    }
    const auto qform_code = load<std::int16_t>(p, kOffQformCode, swap);
    const auto sform_code = load<std::int16_t>(p, kOffSformCode, swap);
    for (int i = 0; i < 3; ++i) {
        if (qform_code > 0) {
            out.grid.origin[i] = load<float>(p, kOffQoffset + 4 * i, swap);
        } else if (sform_code > 0) {
            out.grid.origin[i] = load<float>(p, kOffSrow + 16 * i + 12, swap);
        }
    }

    const float vox_offset_f = load<float>(p, kOffVoxOffset, swap);
    if (!std::isfinite(vox_offset_f) || vox_offset_f < 0.0f)
        throw FormatError(path.string() + ": invalid vox_offset");
    const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

    const std::size_t count = out.grid.dims.count();
    const std::size_t payload = count * sample_bytes(type);

    std::vector<std::uint8_t> image_bytes;
    const std::uint8_t* data = nullptr;
    if (single_file) {
        if (vox_offset < kNiftiHeaderBytes) throw FormatError(path.string() + ": vox_offset inside header");
        if (bytes.size() < vox_offset + payload)
            throw TruncationError(path.string() + ": declares " + std::to_string(vox_offset + payload) +
                                  " bytes, file has " + std::to_string(bytes.size()));
        data = p + vox_offset;
    } else {
        const fs::path img = paired_image_path(path);
        image_bytes = load_maybe_gzip(img);
        if (image_bytes.size() < vox_offset + payload)
            throw TruncationError(img.string() + ": image data shorter than declared");
        data = image_bytes.data() + vox_offset;
    }
    out.values = decode_samples(data, count, type, swap);

    if (load<std::int16_t>(p, kOffIntentCode, swap) == kIntentLabel) {
        const float cal_max = load<float>(p, kOffCalMax, swap);
        if (std::isfinite(cal_max) && cal_max >= 0.0f && cal_max <= 65535.0f && std::trunc(cal_max) == cal_max)
            out.declared_classes = static_cast<int>(cal_max);
    }

    const float slope = load<float>(p, kOffSclSlope, swap);
    const float inter = load<float>(p, kOffSclInter, swap);
    if (std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f)) {
        for (double& v : out.values) v = v * slope + inter;
    }
    return out;
}

DecodedVolume decode_any(const fs::path& path) {
    const auto bytes = load_maybe_gzip(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kNativeMagic, 4) == 0) return decode_native(bytes, path);
    if (bytes.size() >= kNiftiHeaderBytes) {
        const std::uint8_t* m = bytes.data() + kOffMagic;
        if (std::memcmp(m, "n+1\0", 4) == 0 || std::memcmp(m, "ni1\0", 4) == 0) return decode_nifti(bytes, path);
    }
    throw FormatError(path.string() + ": unrecognized volume format (no NIfTI-1 or native magic)");
}

std::vector<std::uint8_t> encode_nifti(const Grid& grid, SampleType type, const std::vector<std::uint8_t>& payload,
                                       int label_classes = -1) {
    std::vector<std::uint8_t> buf(kNiftiVoxOffset, 0);
    store<std::int32_t>(buf, 0, 348);
    if (label_classes >= 0) {
        store<std::int16_t>(buf, kOffIntentCode, kIntentLabel);
        store<float>(buf, kOffCalMax, static_cast<float>(label_classes));
    }
    buf[38] = 'r';  // "regular"
    const std::array<std::int16_t, 8> dim{3,
                                          static_cast<std::int16_t>(grid.dims.nx),
                                          static_cast<std::int16_t>(grid.dims.ny),
                                          static_cast<std::int16_t>(grid.dims.nz),
                                          1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store<std::int16_t>(buf, kOffDim + 2 * i, dim[i]);
    store<std::int16_t>(buf, kOffDatatype, static_cast<std::int16_t>(type));
    store<std::int16_t>(buf, kOffBitpix, static_cast<std::int16_t>(8 * sample_bytes(type)));
    store<float>(buf, kOffPixdim, 1.0f);  // qfac
    for (int i = 0; i < 3; ++i) store<float>(buf, kOffPixdim + 4 * (i + 1), static_cast<float>(grid.spacing[i]));
    store<float>(buf, kOffVoxOffset, static_cast<float>(kNiftiVoxOffset));
    store<float>(buf, kOffSclSlope, 1.0f);
    store<float>(buf, kOffSclInter, 0.0f);
    buf[kOffXyztUnits] = 2 | 8;  // mm, s
    const char descrip[] = "pedseg";
    std::memcpy(buf.data() + kOffDescrip, descrip, sizeof(descrip) - 1);
    store<std::int16_t>(buf, kOffQformCode, 1);
    store<std::int16_t>(buf, kOffSformCode, 1);
    for (int i = 0; i < 3; ++i) {
        store<float>(buf, kOffQoffset + 4 * i, static_cast<float>(grid.origin[i]));
        store<float>(buf, kOffSrow + 16 * i + 4 * i, static_cast<float>(grid.spacing[i]));
        store<float>(buf, kOffSrow + 16 * i + 12, static_cast<float>(grid.origin[i]));
    }
    std::memcpy(buf.data() + kOffMagic, "n+1\0", 4);
    buf.insert(buf.end(), payload.begin(), payload.end());
    return buf;
}

std::vector<std::uint8_t> encode_native(const Grid& grid, std::uint32_t payload_code,
                                        const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> buf(kNativeHeaderBytes, 0);
    std::memcpy(buf.data(), kNativeMagic, 4);
    store<std::uint32_t>(buf, 4, static_cast<std::uint32_t>(grid.dims.nx));
    store<std::uint32_t>(buf, 8, static_cast<std::uint32_t>(grid.dims.ny));
    store<std::uint32_t>(buf, 12, static_cast<std::uint32_t>(grid.dims.nz));
    for (int i = 0; i < 3; ++i) store<float>(buf, 16 + 4 * i, static_cast<float>(grid.spacing[i]));
    store<std::uint32_t>(buf, 28, payload_code);
    buf.insert(buf.end(), payload.begin(), payload.end());
    return buf;
}

template <typename T>
void append_samples(std::vector<std::uint8_t>& out, std::span<const double> values) {
    const std::size_t base = out.size();
    out.resize(base + values.size() * sizeof(T));
    for (std::size_t n = 0; n < values.size(); ++n) {
        const T v = static_cast<T>(values[n]);
        std::memcpy(out.data() + base + n * sizeof(T), &v, sizeof(T));
    }
}

std::vector<std::uint8_t> encode_payload(std::span<const double> values, SampleType type) {
    std::vector<std::uint8_t> out;
    switch (type) {
        case SampleType::uint8: append_samples<std::uint8_t>(out, values); break;
        case SampleType::int8: append_samples<std::int8_t>(out, values); break;
        case SampleType::int16: append_samples<std::int16_t>(out, values); break;
        case SampleType::uint16: append_samples<std::uint16_t>(out, values); break;
        case SampleType::int32: append_samples<std::int32_t>(out, values); break;
        case SampleType::float32: append_samples<float>(out, values); break;
        case SampleType::float64: append_samples<double>(out, values); break;
    }
    return out;
}

bool fits_exactly(std::span<const double> values, SampleType type) {
    auto integral_in = [&](double lo, double hi) {
        return std::all_of(values.begin(), values.end(),
                           [&](double v) { return v >= lo && v <= hi && std::trunc(v) == v; });
    };
    switch (type) {
        case SampleType::uint8: return integral_in(0, 255);
        case SampleType::int8: return integral_in(-128, 127);
        case SampleType::int16: return integral_in(-32768, 32767);
        case SampleType::uint16: return integral_in(0, 65535);
        case SampleType::int32: return integral_in(-2147483648.0, 2147483647.0);
        case SampleType::float32:
            return std::all_of(values.begin(), values.end(),
                               [](double v) { return static_cast<double>(static_cast<float>(v)) == v; });
        case SampleType::float64: return true;
    }
    return false;
}

void check_writable_grid(const Grid& grid, const fs::path& path) {
    validate_grid(grid);
    const auto limit = static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max());
    if (grid.dims.nx > limit || grid.dims.ny > limit || grid.dims.nz > limit)
        throw IoError(path.string() + ": dims exceed the NIfTI-1 limit of 32767");
}

bool is_native_path(const fs::path& path) { return ends_with(path.string(), ".psv"); }
bool is_gzip_path(const fs::path& path) { return ends_with(path.string(), ".gz"); }

void emit(const fs::path& path, std::vector<std::uint8_t> bytes) {
    if (is_gzip_path(path)) bytes = gzip_compress(bytes);
    write_file_bytes(path, bytes);
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& raw) {
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("deflateInit2 failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
    out.resize(produced);
    return out;
}

std::vector<std::uint8_t> gzip_decompress(const std::vector<std::uint8_t>& compressed) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("inflateInit2 failed");
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> chunk{};
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            if (rc == Z_BUF_ERROR) throw TruncationError("gzip stream truncated");
            throw FormatError("corrupt gzip stream");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
        if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw TruncationError("gzip stream truncated");
        }
    }
    inflateEnd(&zs);
    return out;
}

ScalarVolume read_scalar_volume(const fs::path& path) {
    auto decoded = decode_any(path);
    for (double v : decoded.values) {
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite intensity");
    }
    return ScalarVolume(decoded.grid, std::move(decoded.values), decoded.type);
}

LabelVolume read_label_volume(const fs::path& path, int num_classes) {
    auto decoded = decode_any(path);
    std::vector<std::uint16_t> labels(decoded.values.size());
    for (std::size_t n = 0; n < labels.size(); ++n) {
        const double v = decoded.values[n];
        if (!std::isfinite(v) || std::trunc(v) != v)
            throw LabelDomainError(path.string() + ": non-integral label value at voxel " + std::to_string(n));
        if (v < 0.0) throw LabelDomainError(path.string() + ": negative label value " + std::to_string(v));
        if (v > 65535.0) throw LabelDomainError(path.string() + ": label value too large");
        labels[n] = static_cast<std::uint16_t>(v);
    }
    if (num_classes < 0 && decoded.declared_classes >= 0) {
        const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
        if (decoded.declared_classes >= max_label) num_classes = decoded.declared_classes;
    }
    try {
        return LabelVolume(decoded.grid, std::move(labels), num_classes);
    } catch (const LabelDomainError& e) {
        throw LabelDomainError(path.string() + ": " + e.what());
    }
}

std::variant<ScalarVolume, LabelVolume> read_volume(const fs::path& path, VolumeKind kind) {
    if (kind == VolumeKind::scalar) return read_scalar_volume(path);
    return read_label_volume(path);
}

void write_volume(const ScalarVolume& volume, const fs::path& path) {
    check_writable_grid(volume.grid(), path);
    const auto values = volume.data();
    if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }))
        throw InvariantError(path.string() + ": refusing to write non-finite intensities");

    if (is_native_path(path)) {
        if (!fits_exactly(values, SampleType::float32))
            throw IoError(path.string() + ": native format stores float32; values would lose precision");
        emit(path, encode_native(volume.grid(), 1, encode_payload(values, SampleType::float32)));
        return;
    }
    SampleType type = volume.storage();
    if (!fits_exactly(values, type)) type = fits_exactly(values, SampleType::float32) ? SampleType::float32
                                                                                     : SampleType::float64;
    emit(path, encode_nifti(volume.grid(), type, encode_payload(values, type)));
}

void write_volume(const LabelVolume& volume, const fs::path& path) {
    check_writable_grid(volume.grid(), path);
    const auto labels = volume.labels();
    std::vector<double> values(labels.begin(), labels.end());
    if (is_native_path(path)) {
        emit(path, encode_native(volume.grid(), 2, encode_payload(values, SampleType::uint16)));
        return;
    }
    const bool small = std::all_of(labels.begin(), labels.end(), [](std::uint16_t v) { return v <= 255; });
    const SampleType type = small ? SampleType::uint8 : SampleType::uint16;
    emit(path, encode_nifti(volume.grid(), type, encode_payload(values, type), volume.num_classes()));
}

}  // namespace pedseg
