#pragma once
// 3D voxel grids: CT-like intensity volumes and integer label volumes.
//
// Data is stored x-fastest: index = i + nx * (j + ny * k).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pedseg {

using Vec3 = std::array<double, 3>;

struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const { return nx * ny * nz; }
    std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return i + nx * (j + ny * k);
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

struct Grid {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel
    Vec3 origin{0.0, 0.0, 0.0};   // mm

    friend bool operator==(const Grid&, const Grid&) = default;
};

// Throws InvariantError unless dims are positive and spacing positive/finite.
void validate_grid(const Grid& grid);

// Spacing comparison with a relative tolerance: NIfTI stores float32 spacing,
// so a double spacing written and read back can differ in the last bits.
bool same_spacing(const Vec3& a, const Vec3& b, double rel_tol = 1e-6);

// Source/target sample encodings; values are the NIfTI-1 datatype codes.
enum class SampleType : std::int16_t {
    uint8 = 2,
    int16 = 4,
    int32 = 8,
    float32 = 16,
    float64 = 64,
    int8 = 256,
    uint16 = 512,
};

std::size_t sample_bytes(SampleType t);
bool is_sample_type(int code);

class ScalarVolume {
public:
    ScalarVolume() = default;
    // Throws InvariantError on size mismatch, bad grid, or non-finite values.
    ScalarVolume(Grid grid, std::vector<double> data, SampleType storage = SampleType::float32);

    const Grid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims; }
    const Vec3& spacing() const { return grid_.spacing; }
    std::span<const double> data() const { return data_; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data_[grid_.dims.index(i, j, k)]; }
    double operator[](std::size_t idx) const { return data_[idx]; }

    // Preferred on-disk encoding; the writer falls back to float64 when the
    // values do not fit it exactly.
    SampleType storage() const { return storage_; }

    friend bool operator==(const ScalarVolume&, const ScalarVolume&) = default;

private:
    Grid grid_;
    std::vector<double> data_;
    SampleType storage_ = SampleType::float32;
};

class LabelVolume {
public:
    LabelVolume() = default;
    // num_classes < 0 means "the largest label present".
    LabelVolume(Grid grid, std::vector<std::uint16_t> labels, int num_classes = -1);

    const Grid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims; }
    const Vec3& spacing() const { return grid_.spacing; }
    std::span<const std::uint16_t> labels() const { return labels_; }
    std::uint16_t at(std::size_t i, std::size_t j, std::size_t k) const { return labels_[grid_.dims.index(i, j, k)]; }
    std::uint16_t operator[](std::size_t idx) const { return labels_[idx]; }
    int num_classes() const { return num_classes_; }

    friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

private:
    Grid grid_;
    std::vector<std::uint16_t> labels_;
    int num_classes_ = 0;
};

// Throws ComparisonError if the two grids differ in dims or spacing.
void require_same_grid(const Grid& a, const Grid& b, const std::string& what);

}  // namespace pedseg
