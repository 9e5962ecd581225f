#pragma once
// End-to-end phantom experiment: cohort -> plans -> training -> evaluation
// -> age-binned tables, for every method in the comparison set.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pedseg/cohort.hpp"
#include "pedseg/metrics.hpp"
#include "pedseg/phantom.hpp"
#include "pedseg/report.hpp"
#include "pedseg/trainer.hpp"

namespace pedseg {

struct ExperimentConfig {
    CohortSpec cohort;
    TrainConfig train;
    int baseline_epochs = 24;  // AdultSeg / PediatricSeg / MixSeg
    int stage1_epochs = 24;    // adult stage of Sequential and CL(p); equals AdultSeg
    int stage2_epochs = 48;
    std::vector<double> rehearsal_p{0.25, 0.6, 1.0};
    double da_factor = 1.5;
    NsdConfig nsd;
    std::uint64_t seed = 7;
    int threads = 1;

    static ExperimentConfig quick(std::uint64_t seed);
    static ExperimentConfig full(std::uint64_t seed);
};

struct MethodOutcome {
    std::string name;
    TrainingPlan plan;      // empty for the DA row (it reuses AdultSeg)
    ModelParams model;
    std::vector<MetricResult> results;
    std::vector<CaseSummary> cases;
    AggregateRow row;
    std::optional<double> pediatric_mean_dsc;  // mean over pediatric test cases
    std::optional<double> adult_mean_dsc;
};

struct ExperimentResult {
    Cohort cohort;
    std::vector<MethodOutcome> methods;  // table order
    std::string table_markdown;
    std::string table_csv;
    std::string per_age_csv;

    const MethodOutcome& method(const std::string& name) const;
};

// Mean of case-level mean DSC over cases of one domain.
std::optional<double> domain_mean_dsc(const std::vector<CaseSummary>& cases, const Manifest& manifest, Domain domain);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes cohort/, plans/, models/, metrics/, table.md, table.csv,
// per_age.csv and summary.json under `dir`.
void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir);

std::string method_slug(const std::string& name);

}  // namespace pedseg
