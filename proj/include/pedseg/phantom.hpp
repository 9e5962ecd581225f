#pragma once
// Synthetic age-scaled body phantoms with labeled organs.
//
// A phantom is an axis-aligned body ellipsoid centered in the volume whose
// size follows body_scale(age); organs are ellipsoids at fixed
// body-relative positions (plus a small seeded jitter), so a child's organs
// are the adult layout shrunk toward the body center. Intensities are
// per-region means plus seeded Gaussian noise; labels are the exact
// generating geometry.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pedseg/cohort.hpp"
#include "pedseg/volume.hpp"

namespace pedseg {

inline constexpr double kAirIntensity = -1000.0;
inline constexpr double kTissueIntensity = 0.0;

// 0.45 at birth rising linearly to 1.0 at 17 years and above.
double body_scale(double age_years);

struct OrganSlot {
    std::string name;
    Vec3 offset;     // center, in units of the body semi-axes
    Vec3 semi_axes;  // in units of the body semi-axes
    double intensity;
};

// The fixed organ layout; phantoms use the first num_organs entries.
const std::vector<OrganSlot>& organ_layout();

struct PhantomSpec {
    Dims dims{48, 48, 48};
    Vec3 spacing{2.0, 2.0, 2.0};
    int num_organs = 6;
    double age_years = 30.0;
    double noise_sigma = 20.0;
    // Uniform per-axis organ jitter, in units of the body semi-axes.
    double jitter = 0.04;
    std::uint64_t seed = 0;
};

// Throws ParameterError for out-of-range fields.
void validate(const PhantomSpec& spec);

struct PhantomCase {
    ScalarVolume image;
    LabelVolume labels;  // num_classes == 19, organs are 1..num_organs
    CaseRecord record;
};

// Throws DataError when no overlap-free jitter is found within the retry
// budget.
PhantomCase generate_case(const PhantomSpec& spec, const std::string& case_id = "case");

struct CohortSpec {
    int n_adult = 40;
    int n_pediatric = 60;
    // Relative weight of bins 0-3, 4-6, 7-9, 10-12, 13-16 among pediatric cases.
    std::array<double, 5> pediatric_bin_weights{1, 1, 1, 1, 1};
    double adult_age_min = 17.0;
    double adult_age_max = 80.0;
    PhantomSpec base;  // age and seed are set per case
    SplitFractions fractions{0.6, 0.2, 0.2};
    std::uint64_t seed = 7;
};

struct Cohort {
    Manifest manifest;  // split assigned, paths relative to the output dir
    std::vector<PhantomCase> cases;
};

// Per-case seeds come from derive_seed(cohort seed, case index), so the
// result is independent of `threads`.
Cohort generate_cohort(const CohortSpec& spec, int threads = 1);

// Writes images/, labels/, and manifest.json under `dir`.
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir, int threads = 1);

}  // namespace pedseg
