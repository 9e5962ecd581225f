#include "pedseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pedseg/error.hpp"
#include "pedseg/labelmap.hpp"
#include "pedseg/parallel.hpp"
#include "pedseg/random.hpp"
#include "pedseg/volume_io.hpp"

namespace pedseg {
namespace {

// Adult body semi-axes as a fraction of the volume half-extent.
constexpr Vec3 kBodyAxes{0.82, 0.70, 0.88};
constexpr int kJitterRetries = 32;
// Minimum clearance between organ bounding spheres, body-relative units.
constexpr double kOrganGap = 0.04;

double max_axis(const Vec3& v) { return std::max({v[0], v[1], v[2]}); }

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

bool layout_fits(const std::vector<Vec3>& centers, const std::vector<OrganSlot>& slots, int k) {
    for (int a = 0; a < k; ++a) {
        const double ra = max_axis(slots[a].semi_axes);
        if (norm(centers[a]) + ra >= 1.0) return false;
        for (int b = a + 1; b < k; ++b) {
            const Vec3 d{centers[a][0] - centers[b][0], centers[a][1] - centers[b][1], centers[a][2] - centers[b][2]};
            if (norm(d) < ra + max_axis(slots[b].semi_axes) + kOrganGap) return false;
        }
    }
    return true;
}

std::string case_path(const char* dir, const std::string& id) { return std::string(dir) + "/" + id + ".nii.gz"; }

}  // namespace

double body_scale(double age_years) {
    const double a = std::clamp(age_years, 0.0, 17.0);
    return 0.45 + 0.55 * a / 17.0;
}

const std::vector<OrganSlot>& organ_layout() {
    // Offsets/semi-axes are in body-relative units (the body is the unit
    // ball); x = left-right, y = anterior-posterior, z = cranio-caudal.
    static const std::vector<OrganSlot> layout = {
        {"liver", {-0.34, 0.12, 0.22}, {0.30, 0.28, 0.26}, 100.0},
        {"spleen", {0.46, -0.10, 0.26}, {0.18, 0.18, 0.20}, 110.0},
        {"kidney_right", {-0.34, -0.42, -0.24}, {0.14, 0.14, 0.22}, 120.0},
        {"kidney_left", {0.30, -0.42, -0.28}, {0.14, 0.14, 0.22}, 130.0},
        {"heart", {0.04, 0.18, 0.66}, {0.22, 0.20, 0.18}, 140.0},
        {"bladder", {0.00, 0.10, -0.68}, {0.16, 0.16, 0.14}, 150.0},
        {"stomach", {0.20, 0.40, 0.22}, {0.14, 0.12, 0.14}, 160.0},
        {"pancreas", {0.08, 0.00, -0.02}, {0.14, 0.08, 0.08}, 170.0},
        {"gallbladder", {-0.16, 0.48, -0.10}, {0.08, 0.08, 0.08}, 180.0},
        {"aorta", {0.00, -0.30, 0.20}, {0.07, 0.07, 0.16}, 200.0},
        {"adrenal_right", {-0.18, -0.30, 0.06}, {0.06, 0.06, 0.06}, 210.0},
        {"adrenal_left", {0.16, -0.18, 0.06}, {0.06, 0.06, 0.06}, 220.0},
        {"colon_right", {-0.50, 0.30, -0.36}, {0.10, 0.10, 0.12}, 60.0},
        {"colon_left", {0.52, 0.30, -0.30}, {0.10, 0.10, 0.12}, 70.0},
        {"small_bowel", {0.00, 0.46, -0.36}, {0.14, 0.10, 0.10}, 80.0},
        {"duodenum", {-0.04, 0.20, -0.24}, {0.08, 0.06, 0.06}, 90.0},
        {"esophagus", {0.00, -0.24, 0.56}, {0.05, 0.05, 0.10}, 190.0},
        {"femur_right", {-0.40, 0.00, -0.80}, {0.08, 0.08, 0.08}, 250.0},
        {"femur_left", {0.40, 0.00, -0.80}, {0.08, 0.08, 0.08}, 260.0},
    };
    return layout;
}

void validate(const PhantomSpec& spec) {
    if (spec.dims.nx < 4 || spec.dims.ny < 4 || spec.dims.nz < 4)
        throw ParameterError("phantom dims must be at least 4 per axis");
    validate_grid(Grid{spec.dims, spec.spacing, {}});
    if (spec.num_organs < 1 || spec.num_organs > kNumClasses)
        throw ParameterError("phantom num_organs must lie in [1, 19]");
    if (!std::isfinite(spec.age_years) || spec.age_years < 0.0) throw ParameterError("phantom age must be >= 0");
    if (!std::isfinite(spec.noise_sigma) || spec.noise_sigma < 0.0)
        throw ParameterError("phantom noise_sigma must be >= 0");
    if (!std::isfinite(spec.jitter) || spec.jitter < 0.0) throw ParameterError("phantom jitter must be >= 0");
}

PhantomCase generate_case(const PhantomSpec& spec, const std::string& case_id) {
    validate(spec);
    const auto& slots = organ_layout();
    const int k = spec.num_organs;
    Rng rng(spec.seed);

    std::vector<Vec3> centers(k);
    bool placed = false;
    for (int attempt = 0; attempt < kJitterRetries && !placed; ++attempt) {
        for (int m = 0; m < k; ++m) {
            for (int a = 0; a < 3; ++a) centers[m][a] = slots[m].offset[a] + rng.uniform(-spec.jitter, spec.jitter);
        }
        placed = layout_fits(centers, slots, k);
    }
    if (!placed)
        throw DataError("phantom " + case_id + ": no overlap-free organ jitter after " +
                        std::to_string(kJitterRetries) + " attempts");

    const Dims& d = spec.dims;
    const double s = body_scale(spec.age_years);
    Vec3 center{}, body{};
    for (int a = 0; a < 3; ++a) {
        center[a] = (static_cast<double>(d[a]) - 1.0) / 2.0;
        body[a] = s * kBodyAxes[a] * static_cast<double>(d[a]) / 2.0;
    }

    std::vector<std::uint16_t> labels(d.count(), 0);
    std::vector<double> image(d.count(), kAirIntensity);
    std::size_t n = 0;
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x, ++n) {
                // Position in body-relative units.
                const Vec3 p{(static_cast<double>(x) - center[0]) / body[0],
                             (static_cast<double>(y) - center[1]) / body[1],
                             (static_cast<double>(z) - center[2]) / body[2]};
                if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0) continue;
                image[n] = kTissueIntensity;
                for (int m = 0; m < k; ++m) {
                    double r2 = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double t = (p[a] - centers[m][a]) / slots[m].semi_axes[a];
                        r2 += t * t;
                    }
                    if (r2 <= 1.0) {
                        labels[n] = static_cast<std::uint16_t>(m + 1);
                        image[n] = slots[m].intensity;
                        break;
                    }
                }
            }
        }
    }
    if (spec.noise_sigma > 0.0) {
        for (double& v : image) v += spec.noise_sigma * rng.normal();
    }

    const Grid grid{spec.dims, spec.spacing, {}};
    PhantomCase out{ScalarVolume(grid, std::move(image)), LabelVolume(grid, std::move(labels), kNumClasses), {}};
    out.record.case_id = case_id;
    out.record.age_years = spec.age_years;
    out.record.domain = std::floor(spec.age_years) >= 17 ? Domain::adult : Domain::pediatric;
    out.record.image_path = case_path("images", case_id);
    out.record.label_path = case_path("labels", case_id);
    return out;
}

Cohort generate_cohort(const CohortSpec& spec, int threads) {
    if (spec.n_adult < 1 || spec.n_pediatric < 1) throw ParameterError("cohort counts must be positive");
    if (!(spec.adult_age_min >= 17.0 && spec.adult_age_max > spec.adult_age_min))
        throw ParameterError("adult age range must start at 17 or later and be nonempty");
    double weight_sum = 0.0;
    for (double w : spec.pediatric_bin_weights) {
        if (!std::isfinite(w) || w < 0.0) throw ParameterError("pediatric bin weights must be non-negative");
        weight_sum += w;
    }
    if (weight_sum <= 0.0) throw ParameterError("pediatric bin weights must not all be zero");
    validate(spec.base);

    const std::size_t total = static_cast<std::size_t>(spec.n_adult + spec.n_pediatric);
    Cohort cohort;
    cohort.cases.resize(total);
    parallel_for(total, threads, [&](std::size_t index) {
        Rng rng(derive_seed(spec.seed, index));
        const bool adult = index < static_cast<std::size_t>(spec.n_adult);
        double age = 0.0;
        char id[32];
        if (adult) {
            age = rng.uniform(spec.adult_age_min, spec.adult_age_max);
            std::snprintf(id, sizeof(id), "A%03zu", index);
        } else {
            double pick = rng.uniform() * weight_sum;
            std::size_t bin = 0;
            while (bin + 1 < spec.pediatric_bin_weights.size() && pick >= spec.pediatric_bin_weights[bin]) {
                pick -= spec.pediatric_bin_weights[bin];
                ++bin;
            }
            // Skip zero-weight bins that the subtraction above may land on.
            while (spec.pediatric_bin_weights[bin] <= 0.0) --bin;
            const auto [lo, hi] = bin_years(kAgeBins[bin]);
            age = rng.uniform(static_cast<double>(lo), static_cast<double>(hi + 1));
            std::snprintf(id, sizeof(id), "P%03zu", index - static_cast<std::size_t>(spec.n_adult));
        }
        PhantomSpec ps = spec.base;
        ps.age_years = age;
        ps.seed = rng.next();
        cohort.cases[index] = generate_case(ps, id);
    });

    for (const auto& c : cohort.cases) cohort.manifest.cases.push_back(c.record);
    cohort.manifest = split_balanced(std::move(cohort.manifest), spec.fractions, derive_seed(spec.seed, total));
    for (std::size_t i = 0; i < total; ++i) cohort.cases[i].record = cohort.manifest.cases[i];
    return cohort;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir, int threads) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "labels");
    parallel_for(cohort.cases.size(), threads, [&](std::size_t i) {
        const auto& c = cohort.cases[i];
        write_volume(c.image, dir / c.record.image_path);
        write_volume(c.labels, dir / c.record.label_path);
    });
    save_manifest(cohort.manifest, dir / "manifest.json");
}

}  // namespace pedseg
