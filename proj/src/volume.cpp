#include "pedseg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "pedseg/error.hpp"

namespace pedseg {

std::string to_string(const Dims& d) {
    return "(" + std::to_string(d.nx) + "," + std::to_string(d.ny) + "," + std::to_string(d.nz) + ")";
}

void validate_grid(const Grid& grid) {
    if (grid.dims.nx == 0 || grid.dims.ny == 0 || grid.dims.nz == 0)
        throw InvariantError("volume dims must be positive, got " + to_string(grid.dims));
    for (double s : grid.spacing) {
        if (!std::isfinite(s) || s <= 0.0)
            throw InvariantError("volume spacing must be positive and finite");
    }
    for (double o : grid.origin) {
        if (!std::isfinite(o)) throw InvariantError("volume origin must be finite");
    }
}

bool same_spacing(const Vec3& a, const Vec3& b, double rel_tol) {
    for (int i = 0; i < 3; ++i) {
        if (std::abs(a[i] - b[i]) > rel_tol * std::max(std::abs(a[i]), std::abs(b[i]))) return false;
    }
    return true;
}

std::size_t sample_bytes(SampleType t) {
    switch (t) {
        case SampleType::uint8:
        case SampleType::int8: return 1;
        case SampleType::int16:
        case SampleType::uint16: return 2;
        case SampleType::int32:
        case SampleType::float32: return 4;
        case SampleType::float64: return 8;
    }
    return 0;
}

bool is_sample_type(int code) {
    switch (code) {
        case 2: case 4: case 8: case 16: case 64: case 256: case 512: return true;
        default: return false;
    }
}

ScalarVolume::ScalarVolume(Grid grid, std::vector<double> data, SampleType storage)
    : grid_(grid), data_(std::move(data)), storage_(storage) {
    validate_grid(grid_);
    if (data_.size() != grid_.dims.count())
        throw InvariantError("scalar volume has " + std::to_string(data_.size()) + " samples, dims " +
                             to_string(grid_.dims) + " need " + std::to_string(grid_.dims.count()));
    if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); }))
        throw InvariantError("scalar volume contains non-finite intensities");
}

LabelVolume::LabelVolume(Grid grid, std::vector<std::uint16_t> labels, int num_classes)
    : grid_(grid), labels_(std::move(labels)) {
    validate_grid(grid_);
    if (labels_.size() != grid_.dims.count())
        throw InvariantError("label volume has " + std::to_string(labels_.size()) + " samples, dims " +
                             to_string(grid_.dims) + " need " + std::to_string(grid_.dims.count()));
    const int max_label = labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
    if (num_classes < 0) {
        num_classes_ = max_label;
    } else {
        if (max_label > num_classes)
            throw LabelDomainError("label " + std::to_string(max_label) + " exceeds num_classes " +
                                   std::to_string(num_classes));
        num_classes_ = num_classes;
    }
}

void require_same_grid(const Grid& a, const Grid& b, const std::string& what) {
    if (a.dims != b.dims)
        throw ComparisonError(what + ": dims differ " + to_string(a.dims) + " vs " + to_string(b.dims));
    if (!same_spacing(a.spacing, b.spacing))
        throw ComparisonError(what + ": spacing differs");
}

}  // namespace pedseg
