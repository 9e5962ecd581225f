#include "pedseg/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "pedseg/error.hpp"

namespace pedseg {
namespace {

std::size_t scaled_extent(std::size_t n, double ratio) {
    const double v = std::round(static_cast<double>(n) * ratio);
    return v < 1.0 ? 1 : static_cast<std::size_t>(v);
}

struct Tap {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double w = 0.0;  // weight of hi
};

std::vector<Tap> linear_taps(std::size_t n_in, std::size_t n_out) {
    std::vector<Tap> taps(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double c = std::clamp(mapped_coordinate(i, n_in, n_out), 0.0, static_cast<double>(n_in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(c));
        const std::size_t hi = std::min(lo + 1, n_in - 1);
        taps[i] = {lo, hi, c - static_cast<double>(lo)};
    }
    return taps;
}

std::vector<std::size_t> nearest_taps(std::size_t n_in, std::size_t n_out) {
    std::vector<std::size_t> taps(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        // ceil(c - 0.5) rounds to nearest with exact halves going down.
        const double c = mapped_coordinate(i, n_in, n_out);
        const double r = std::clamp(std::ceil(c - 0.5), 0.0, static_cast<double>(n_in - 1));
        taps[i] = static_cast<std::size_t>(r);
    }
    return taps;
}

}  // namespace

Grid resampled_grid(const Grid& in, const ResampleTarget& target) {
    Grid out = in;
    if (const auto* s = std::get_if<ScaleFactor>(&target)) {
        if (!std::isfinite(s->factor) || s->factor <= 0.0)
            throw ParameterError("scale factor must be positive and finite");
        out.dims = {scaled_extent(in.dims.nx, s->factor), scaled_extent(in.dims.ny, s->factor),
                    scaled_extent(in.dims.nz, s->factor)};
        for (int a = 0; a < 3; ++a) out.spacing[a] = in.spacing[a] / s->factor;
    } else {
        const auto& sp = std::get<TargetSpacing>(target).spacing_mm;
        for (double v : sp) {
            if (!std::isfinite(v) || v <= 0.0) throw ParameterError("target spacing must be positive and finite");
        }
        out.dims = {scaled_extent(in.dims.nx, in.spacing[0] / sp[0]), scaled_extent(in.dims.ny, in.spacing[1] / sp[1]),
                    scaled_extent(in.dims.nz, in.spacing[2] / sp[2])};
        out.spacing = sp;
    }
    return out;
}

double mapped_coordinate(std::size_t i, std::size_t n_in, std::size_t n_out) {
    if (n_out <= 1 || n_in <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
}

ScalarVolume resample_scalar(const ScalarVolume& volume, const Grid& out_grid) {
    validate_grid(out_grid);
    const Dims& din = volume.dims();
    const Dims& dout = out_grid.dims;
    const auto tx = linear_taps(din.nx, dout.nx);
    const auto ty = linear_taps(din.ny, dout.ny);
    const auto tz = linear_taps(din.nz, dout.nz);

    std::vector<double> out(dout.count());
    std::size_t n = 0;
    for (std::size_t k = 0; k < dout.nz; ++k) {
        const Tap& z = tz[k];
        for (std::size_t j = 0; j < dout.ny; ++j) {
            const Tap& y = ty[j];
            for (std::size_t i = 0; i < dout.nx; ++i, ++n) {
                const Tap& x = tx[i];
                auto v = [&](std::size_t a, std::size_t b, std::size_t c) { return volume.at(a, b, c); };
                const double c00 = (1.0 - x.w) * v(x.lo, y.lo, z.lo) + x.w * v(x.hi, y.lo, z.lo);
                const double c10 = (1.0 - x.w) * v(x.lo, y.hi, z.lo) + x.w * v(x.hi, y.hi, z.lo);
                const double c01 = (1.0 - x.w) * v(x.lo, y.lo, z.hi) + x.w * v(x.hi, y.lo, z.hi);
                const double c11 = (1.0 - x.w) * v(x.lo, y.hi, z.hi) + x.w * v(x.hi, y.hi, z.hi);
                const double c0 = (1.0 - y.w) * c00 + y.w * c10;
                const double c1 = (1.0 - y.w) * c01 + y.w * c11;
                out[n] = (1.0 - z.w) * c0 + z.w * c1;
            }
        }
    }
    return ScalarVolume(out_grid, std::move(out), volume.storage());
}

LabelVolume resample_label(const LabelVolume& volume, const Grid& out_grid) {
    validate_grid(out_grid);
    const Dims& din = volume.dims();
    const Dims& dout = out_grid.dims;
    const auto tx = nearest_taps(din.nx, dout.nx);
    const auto ty = nearest_taps(din.ny, dout.ny);
    const auto tz = nearest_taps(din.nz, dout.nz);

    std::vector<std::uint16_t> out(dout.count());
    std::size_t n = 0;
    for (std::size_t k = 0; k < dout.nz; ++k)
        for (std::size_t j = 0; j < dout.ny; ++j)
            for (std::size_t i = 0; i < dout.nx; ++i, ++n) out[n] = volume.at(tx[i], ty[j], tz[k]);
    return LabelVolume(out_grid, std::move(out), volume.num_classes());
}

ScalarVolume resample_scalar(const ScalarVolume& volume, const ResampleTarget& target) {
    return resample_scalar(volume, resampled_grid(volume.grid(), target));
}

LabelVolume resample_label(const LabelVolume& volume, const ResampleTarget& target) {
    return resample_label(volume, resampled_grid(volume.grid(), target));
}

LabelVolume da_upscale_pipeline(const ScalarVolume& image, const Segmenter& predict, double factor) {
    if (!std::isfinite(factor) || factor <= 0.0) throw ParameterError("upscale factor must be positive and finite");
    const ScalarVolume upscaled = resample_scalar(image, ScaleFactor{factor});
    const LabelVolume labels = predict(upscaled);
    if (labels.dims() != upscaled.dims())
        throw ComparisonError("segmenter returned dims " + to_string(labels.dims()) + " for input " +
                              to_string(upscaled.dims()));
    return resample_label(labels, image.grid());
}

}  // namespace pedseg
