#include "pedseg/edt.hpp"

#include <algorithm>
#include <limits>

#include "pedseg/error.hpp"

namespace pedseg {

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void lower_envelope_1d(const double* f, double* out, std::size_t n, std::size_t stride, double weight,
                       std::size_t* sites, double* bounds) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto val = [&](std::size_t i) { return f[i]; };

    // Parabola rooted at site i has apex value f[i]; two parabolas from sites
    // p < q intersect at s = ((f[q] + w q^2) - (f[p] + w p^2)) / (2 w (q - p)).
    auto intersect = [&](std::size_t p, std::size_t q) {
        const double dp = static_cast<double>(p);
        const double dq = static_cast<double>(q);
        return ((val(q) + weight * dq * dq) - (val(p) + weight * dp * dp)) / (2.0 * weight * (dq - dp));
    };

    std::size_t k = 0;  // index of the rightmost parabola in the envelope
    bool any = false;
    for (std::size_t q = 0; q < n; ++q) {
        if (val(q) == inf) continue;
        if (!any) {
            sites[0] = q;
            bounds[0] = -inf;
            bounds[1] = inf;
            any = true;
            continue;
        }
        // bounds[0] is -inf, so the scan stops at k == 0 at the latest.
        double s = intersect(sites[k], q);
        while (s <= bounds[k]) {
            --k;
            s = intersect(sites[k], q);
        }
        ++k;
        sites[k] = q;
        bounds[k] = s;
        bounds[k + 1] = inf;
    }

    if (!any) {
        for (std::size_t q = 0; q < n; ++q) out[q * stride] = inf;
        return;
    }
    std::size_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double dq = static_cast<double>(q);
        while (bounds[j + 1] < dq) ++j;
        const double d = dq - static_cast<double>(sites[j]);
        out[q * stride] = weight * d * d + val(sites[j]);
    }
}

std::vector<double> squared_edt(const BinaryMask& mask) {
    const Dims& d = mask.dims;
    if (mask.bits.size() != d.count()) throw InvariantError("mask size does not match dims");
    if (mask.empty()) throw EmptyMaskError("squared_edt of an empty mask");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> field(d.count());
    for (std::size_t n = 0; n < field.size(); ++n) field[n] = mask.bits[n] ? 0.0 : inf;

    const std::size_t longest = std::max({d.nx, d.ny, d.nz});
    std::vector<std::size_t> sites(longest);
    std::vector<double> bounds(longest + 1);
    std::vector<double> line(longest);

    const std::array<std::size_t, 3> extent{d.nx, d.ny, d.nz};
    const std::array<std::size_t, 3> stride{1, d.nx, d.nx * d.ny};
    for (int axis = 0; axis < 3; ++axis) {
        const double weight = mask.spacing[axis] * mask.spacing[axis];
        const int a1 = (axis + 1) % 3;
        const int a2 = (axis + 2) % 3;
        for (std::size_t u = 0; u < extent[a1]; ++u) {
            for (std::size_t v = 0; v < extent[a2]; ++v) {
                double* base = field.data() + u * stride[a1] + v * stride[a2];
                for (std::size_t q = 0; q < extent[axis]; ++q) line[q] = base[q * stride[axis]];
                lower_envelope_1d(line.data(), base, extent[axis], stride[axis], weight, sites.data(),
                                  bounds.data());
            }
        }
    }
    return field;
}

}  // namespace pedseg
