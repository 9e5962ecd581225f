#pragma once
// Volume file I/O.
//
// Two on-disk formats are understood:
//   * NIfTI-1 single file (.nii, optionally gzip-compressed .nii.gz), plus
//     the .hdr/.img pair variant ("ni1" magic) on read;
//   * a native fixture format (.psv): 32-byte header followed by raw
//     little-endian float32 (scalar) or uint16 (label) samples.
//
// Orientation (qform/sform rotations) is not interpreted; only spacing and
// the translation part are carried through.

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "pedseg/volume.hpp"

namespace pedseg {

enum class VolumeKind { scalar, label };

// Layout of the native header, little-endian:
//   char  magic[4] = "PSV1"
//   u32   nx, ny, nz
//   f32   sx, sy, sz
//   u32   payload  (1 = float32, 2 = uint16)
inline constexpr char kNativeMagic[4] = {'P', 'S', 'V', '1'};
inline constexpr std::size_t kNativeHeaderBytes = 32;
inline constexpr std::size_t kNiftiHeaderBytes = 348;
inline constexpr std::size_t kNiftiVoxOffset = 352;

ScalarVolume read_scalar_volume(const std::filesystem::path& path);

// num_classes < 0 takes the count recorded in a NIfTI label intent, falling
// back to the largest label present.
LabelVolume read_label_volume(const std::filesystem::path& path, int num_classes = -1);

std::variant<ScalarVolume, LabelVolume> read_volume(const std::filesystem::path& path, VolumeKind kind);

// Format follows the extension: ".psv" native, ".gz" gzip NIfTI, else NIfTI.
void write_volume(const ScalarVolume& volume, const std::filesystem::path& path);
void write_volume(const LabelVolume& volume, const std::filesystem::path& path);

// Raw byte helpers, exposed for fixtures and tests.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& raw);
std::vector<std::uint8_t> gzip_decompress(const std::vector<std::uint8_t>& compressed);

}  // namespace pedseg
