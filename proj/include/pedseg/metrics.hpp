#pragma once
// Per-class overlap (DSC) and boundary (NSD) metrics.
//
// Policy for absent structures: when both masks are empty the value is
// undefined and excluded from aggregation; when exactly one is empty DSC and
// NSD are 0.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pedseg/edt.hpp"
#include "pedseg/volume.hpp"

namespace pedseg {

struct NsdConfig {
    double tau_mm = 3.0;
};

void validate(const NsdConfig& cfg);

struct MetricResult {
    std::string case_id;
    int class_id = 0;
    std::optional<double> dsc;
    std::optional<double> nsd;
    std::size_t gt_voxels = 0;
    std::size_t pred_voxels = 0;

    bool defined() const { return dsc.has_value(); }
    friend bool operator==(const MetricResult&, const MetricResult&) = default;
};

std::optional<double> dice(const BinaryMask& a, const BinaryMask& b);

// Foreground voxels with at least one background 6-neighbor; voxels outside
// the volume count as background. Linear indices, ascending.
std::vector<std::size_t> surface_voxels(const BinaryMask& mask);

// Surface Dice at tolerance tau, measured between boundary voxel centers.
std::optional<double> nsd(const BinaryMask& a, const BinaryMask& b, const NsdConfig& cfg);

BinaryMask class_mask(const LabelVolume& volume, int class_id);

// One result per class 1..19. Both volumes must have num_classes == 19 and
// share dims/spacing; a mismatch throws ComparisonError naming the case.
std::vector<MetricResult> evaluate_case(const LabelVolume& pred, const LabelVolume& gt, const NsdConfig& cfg,
                                        const std::string& case_id = {});

// Metrics CSV: case_id,class_id,class_name,dsc,nsd,gt_voxels,pred_voxels,defined
// Undefined values are written as empty fields.
using ClassNamer = std::function<std::string(int)>;
void write_metrics_csv(std::ostream& out, const std::vector<MetricResult>& results, const ClassNamer& namer);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricResult>& results,
                       const ClassNamer& namer);
std::vector<MetricResult> read_metrics_csv(const std::filesystem::path& path);

}  // namespace pedseg
