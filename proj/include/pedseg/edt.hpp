#pragma once

#include <cstdint>
#include <vector>

#include "pedseg/volume.hpp"

namespace pedseg {

struct BinaryMask {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> bits;  // 1 = foreground

    BinaryMask() = default;
    BinaryMask(Dims d, Vec3 s) : dims(d), spacing(s), bits(d.count(), 0) {}

    std::size_t count() const;
    bool empty() const { return count() == 0; }
};

// Exact squared Euclidean distance (mm^2) from every voxel center to the
// nearest foreground voxel center, under anisotropic spacing.
//
// Three separable passes, each computing the lower envelope of parabolas
// along one axis (Felzenszwalb & Huttenlocher), so the result is exact up to
// floating-point rounding. Throws EmptyMaskError for an empty mask.
std::vector<double> squared_edt(const BinaryMask& mask);

// One 1D pass: out[q] = min_i (weight * (q - i)^2 + f[i]) over finite f[i].
// `f` is contiguous, `out` a strided view of length n. Scratch buffers `sites` and
// `bounds` must hold n and n + 1 entries.
void lower_envelope_1d(const double* f, double* out, std::size_t n, std::size_t stride, double weight,
                       std::size_t* sites, double* bounds);

}  // namespace pedseg
