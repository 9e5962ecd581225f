#pragma once
// Case manifests, age bins, age-stratified splits, and training plans.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pedseg {

enum class Domain { adult, pediatric };
enum class Split { train, val, test };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);

struct CaseRecord {
    std::string case_id;
    double age_years = 0.0;
    Domain domain = Domain::pediatric;
    std::string image_path;
    std::string label_path;
    Split split = Split::train;

    friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

// Throws ManifestError when an invariant fails (adult <=> floor(age) >= 17).
void validate(const CaseRecord& record);

struct Manifest {
    std::vector<CaseRecord> cases;
    // Directory that relative image/label paths resolve against. Set by
    // load_manifest; not serialized.
    std::filesystem::path base_dir;

    const CaseRecord* find(std::string_view case_id) const;
    // Throws ManifestError when the id is unknown.
    const CaseRecord& at(std::string_view case_id) const;
    std::filesystem::path resolve(const std::string& relative) const;
};

// Unique ids plus validate() on every record.
void validate(const Manifest& manifest);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Age strata; each written range is inclusive at both ends on integer
// (floored) years.
enum class AgeBin { y0_3, y4_6, y7_9, y10_12, y13_16, y17_plus };
inline constexpr std::array<AgeBin, 6> kAgeBins{AgeBin::y0_3,   AgeBin::y4_6,   AgeBin::y7_9,
                                                AgeBin::y10_12, AgeBin::y13_16, AgeBin::y17_plus};
inline constexpr std::size_t kNumAgeBins = kAgeBins.size();

std::string_view bin_label(AgeBin bin);
std::size_t bin_index(AgeBin bin);
// Lowest and highest integer year in the bin (17+ reports 17 and -1).
std::pair<int, int> bin_years(AgeBin bin);
// Throws DomainError for negative or non-finite ages.
AgeBin assign_age_bin(double age_years);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Stratified by age bin: each bin is sorted by case id, shuffled with a
// per-bin seeded stream, and cut by largest-remainder rounding.
Manifest split_balanced(Manifest manifest, const SplitFractions& fractions, std::uint64_t seed);

struct PlanStage {
    std::vector<std::vector<std::string>> epochs;  // per-epoch ordered case ids

    friend bool operator==(const PlanStage&, const PlanStage&) = default;
};

struct TrainingPlan {
    std::string name;
    double p = 0.0;
    std::uint64_t seed = 0;
    bool fixed_subset = false;
    std::vector<PlanStage> stages;

    friend bool operator==(const TrainingPlan&, const TrainingPlan&) = default;
};

enum class BaselineKind { adult_seg, pediatric_seg, mix_seg };
std::string_view to_string(BaselineKind kind);

// Single stage; each epoch is a seeded shuffle of the eligible train cases.
TrainingPlan plan_baseline(BaselineKind kind, const Manifest& manifest, int epochs, std::uint64_t seed);

struct RehearsalOptions {
    double p = 0.25;
    int stage1_epochs = 10;
    int stage2_epochs = 10;
    std::uint64_t seed = 0;
    // One subset of round(p * N) adult cases reused every epoch instead of a
    // fresh Bernoulli(p) draw per epoch.
    bool fixed_subset = false;
};

// Stage 1 is adult-only (identical to AdultSeg with the same seed). Stage 2
// holds every pediatric train case plus rehearsed adult cases. p = 0 is the
// sequential plan.
TrainingPlan plan_rehearsal(const Manifest& manifest, const RehearsalOptions& options);

std::string rehearsal_name(double p);

// Every referenced case id must exist in the manifest.
void validate(const TrainingPlan& plan, const Manifest& manifest);

std::string plan_to_json(const TrainingPlan& plan);
TrainingPlan plan_from_json(std::string_view text);
TrainingPlan load_plan(const std::filesystem::path& path);
void save_plan(const TrainingPlan& plan, const std::filesystem::path& path);

// Shared by the JSON writers so artifacts end with a newline.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pedseg
