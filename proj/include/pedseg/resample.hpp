#pragma once
// Grid resampling: trilinear for intensities, nearest neighbor for labels.
//
// Coordinate convention is align-corners: output sample i along an axis
// reads input coordinate i * (n_in - 1) / (n_out - 1), and an axis with a
// single output sample reads coordinate 0. Reads outside the grid clamp to
// the boundary sample.

#include <cstddef>
#include <functional>
#include <variant>

#include "pedseg/volume.hpp"

namespace pedseg {

// Uniform scale: dims -> round(dims * f), spacing -> spacing / f.
struct ScaleFactor {
    double factor = 1.0;
};

// Requested spacing: dims -> round(dims * spacing_in / spacing_out).
struct TargetSpacing {
    Vec3 spacing_mm{1.5, 1.5, 1.5};
};

using ResampleTarget = std::variant<ScaleFactor, TargetSpacing>;

// Output grid for a target. Throws ParameterError for non-positive or
// non-finite factors/spacings.
Grid resampled_grid(const Grid& in, const ResampleTarget& target);

// Input coordinate read by output sample i.
double mapped_coordinate(std::size_t i, std::size_t n_in, std::size_t n_out);

ScalarVolume resample_scalar(const ScalarVolume& volume, const ResampleTarget& target);
LabelVolume resample_label(const LabelVolume& volume, const ResampleTarget& target);

// Resample onto an explicit output grid (its dims drive the coordinate
// mapping; spacing and origin are copied into the result).
ScalarVolume resample_scalar(const ScalarVolume& volume, const Grid& out_grid);
LabelVolume resample_label(const LabelVolume& volume, const Grid& out_grid);

using Segmenter = std::function<LabelVolume(const ScalarVolume&)>;

// Upscale the image by f, segment it, and bring the labels back onto the
// original grid by nearest-neighbor resampling.
LabelVolume da_upscale_pipeline(const ScalarVolume& image, const Segmenter& predict, double factor);

}  // namespace pedseg
