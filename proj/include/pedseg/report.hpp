#pragma once
// Age-binned aggregation of per-class metrics and table rendering.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pedseg/cohort.hpp"
#include "pedseg/metrics.hpp"

namespace pedseg {

struct BinStats {
    double mean_dsc = 0.0;
    double mean_nsd = 0.0;
    std::size_t n_cases = 0;      // distinct cases in the bin
    std::size_t n_undefined = 0;  // cases with no defined class

    bool has_values() const { return n_cases > n_undefined; }
    friend bool operator==(const BinStats&, const BinStats&) = default;
};

struct AggregateRow {
    std::string method;
    std::array<BinStats, kNumAgeBins> bins{};
};

// macro: mean over defined classes per case, then over cases in the bin.
// micro: mean over every defined (case, class) pair in the bin.
enum class Averaging { macro, micro };

// Throws ManifestError when a result's case id is not in the manifest.
AggregateRow aggregate(const std::vector<MetricResult>& results, const Manifest& manifest, const std::string& method,
                       Averaging averaging = Averaging::macro);

struct CaseSummary {
    std::string case_id;
    double age_years = 0.0;
    AgeBin bin = AgeBin::y0_3;
    std::optional<double> mean_dsc;  // empty when no class is defined
    std::optional<double> mean_nsd;
    std::string method;
};

// One summary per distinct case, sorted by age then case id.
std::vector<CaseSummary> summarize_cases(const std::vector<MetricResult>& results, const Manifest& manifest,
                                         const std::string& method);

// Bin means rebuilt from case summaries (macro averaging).
AggregateRow aggregate_summaries(const std::vector<CaseSummary>& summaries, const std::string& method);

// Fraction rendered as a percentage with one decimal, rounding half up:
// 0.8347 -> "83.5".
std::string format_percent(double fraction);

enum class TableFormat { csv, markdown };

// Methods x bins, cells "DSC/NSD" in percent; empty bins render "--/--".
// CSV has one row per (method, bin). Throws ParameterError for no rows.
std::string render(const std::vector<AggregateRow>& rows, TableFormat format);

// CSV: case_id,age_years,bin,mean_dsc,mean_nsd,method
std::string export_per_age(const std::vector<MetricResult>& results, const Manifest& manifest,
                           const std::string& method);
std::string per_age_csv(const std::vector<CaseSummary>& summaries);
std::vector<CaseSummary> parse_per_age_csv(const std::string& text);

}  // namespace pedseg
