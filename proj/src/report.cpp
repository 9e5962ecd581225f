#include "pedseg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pedseg/error.hpp"

namespace pedseg {
namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string cell(const BinStats& b) {
    if (!b.has_values()) return "--/--";
    return format_percent(b.mean_dsc) + "/" + format_percent(b.mean_nsd);
}

AgeBin parse_bin(const std::string& label) {
    for (AgeBin b : kAgeBins) {
        if (bin_label(b) == label) return b;
    }
    throw DataError("unknown age bin '" + label + "'");
}

struct CaseAccumulator {
    double dsc_sum = 0.0;
    double nsd_sum = 0.0;
    std::size_t defined = 0;
};

}  // namespace

std::vector<CaseSummary> summarize_cases(const std::vector<MetricResult>& results, const Manifest& manifest,
                                         const std::string& method) {
    // Sum in (case, class) order so the result does not depend on input order.
    std::vector<const MetricResult*> ordered;
    for (const auto& r : results) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->case_id != b->case_id ? a->case_id < b->case_id : a->class_id < b->class_id;
    });
    std::map<std::string, CaseAccumulator> per_case;
    for (const auto* r : ordered) {
        auto& acc = per_case[r->case_id];
        if (r->dsc && r->nsd) {
            acc.dsc_sum += *r->dsc;
            acc.nsd_sum += *r->nsd;
            ++acc.defined;
        }
    }
    std::vector<CaseSummary> out;
    for (const auto& [id, acc] : per_case) {
        const CaseRecord& record = manifest.at(id);
        CaseSummary s;
        s.case_id = id;
        s.age_years = record.age_years;
        s.bin = assign_age_bin(record.age_years);
        s.method = method;
        if (acc.defined > 0) {
            s.mean_dsc = acc.dsc_sum / static_cast<double>(acc.defined);
            s.mean_nsd = acc.nsd_sum / static_cast<double>(acc.defined);
        }
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const CaseSummary& a, const CaseSummary& b) {
        if (a.age_years != b.age_years) return a.age_years < b.age_years;
        return a.case_id < b.case_id;
    });
    return out;
}

AggregateRow aggregate_summaries(const std::vector<CaseSummary>& summaries, const std::string& method) {
    // Sum in case-id order so the result does not depend on input order.
    std::vector<const CaseSummary*> ordered;
    for (const auto& s : summaries) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->case_id < b->case_id; });

    AggregateRow row;
    row.method = method;
    std::array<double, kNumAgeBins> dsc{}, nsd{};
    for (const auto* s : ordered) {
        auto& b = row.bins[bin_index(s->bin)];
        ++b.n_cases;
        if (!s->mean_dsc || !s->mean_nsd) {
            ++b.n_undefined;
            continue;
        }
        dsc[bin_index(s->bin)] += *s->mean_dsc;
        nsd[bin_index(s->bin)] += *s->mean_nsd;
    }
    for (std::size_t i = 0; i < kNumAgeBins; ++i) {
        auto& b = row.bins[i];
        if (!b.has_values()) continue;
        const auto n = static_cast<double>(b.n_cases - b.n_undefined);
        b.mean_dsc = dsc[i] / n;
        b.mean_nsd = nsd[i] / n;
    }
    return row;
}

AggregateRow aggregate(const std::vector<MetricResult>& results, const Manifest& manifest, const std::string& method,
                       Averaging averaging) {
    const auto summaries = summarize_cases(results, manifest, method);
    AggregateRow row = aggregate_summaries(summaries, method);
    if (averaging == Averaging::macro) return row;

    // Micro: same case counts, means over all defined (case, class) pairs.
    std::vector<const MetricResult*> ordered;
    for (const auto& r : results) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->case_id != b->case_id ? a->case_id < b->case_id : a->class_id < b->class_id;
    });
    std::array<CaseAccumulator, kNumAgeBins> acc{};
    for (const auto* r : ordered) {
        if (!r->dsc || !r->nsd) continue;
        auto& a = acc[bin_index(assign_age_bin(manifest.at(r->case_id).age_years))];
        a.dsc_sum += *r->dsc;
        a.nsd_sum += *r->nsd;
        ++a.defined;
    }
    for (std::size_t i = 0; i < kNumAgeBins; ++i) {
        if (acc[i].defined == 0) continue;
        row.bins[i].mean_dsc = acc[i].dsc_sum / static_cast<double>(acc[i].defined);
        row.bins[i].mean_nsd = acc[i].nsd_sum / static_cast<double>(acc[i].defined);
    }
    return row;
}

std::string format_percent(double fraction) {
    // The epsilon absorbs representation error such as 0.8345 * 1000 = 834.4999...
    const double tenths = std::floor(fraction * 1000.0 + 0.5 + 1e-9);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", tenths / 10.0);
    return buf;
}

std::string render(const std::vector<AggregateRow>& rows, TableFormat format) {
    if (rows.empty()) throw ParameterError("nothing to render");
    std::ostringstream out;
    if (format == TableFormat::markdown) {
        out << "Mean DSC/NSD (%) per age bin\n\n";
        out << "| Method |";
        for (AgeBin b : kAgeBins) out << ' ' << bin_label(b) << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < kNumAgeBins; ++i) out << "---|";
        out << '\n';
        for (const auto& row : rows) {
            out << "| " << row.method << " |";
            for (const auto& b : row.bins) out << ' ' << cell(b) << " |";
            out << '\n';
        }
    } else {
        out << "method,bin,dsc_pct,nsd_pct,n_cases,n_undefined\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < kNumAgeBins; ++i) {
                const auto& b = row.bins[i];
                const bool has = b.has_values();
                out << row.method << ',' << bin_label(kAgeBins[i]) << ',' << (has ? format_percent(b.mean_dsc) : "--")
                    << ',' << (has ? format_percent(b.mean_nsd) : "--") << ',' << b.n_cases << ',' << b.n_undefined
                    << '\n';
            }
        }
    }
    return out.str();
}

std::string per_age_csv(const std::vector<CaseSummary>& summaries) {
    std::ostringstream out;
    out << "case_id,age_years,bin,mean_dsc,mean_nsd,method\n";
    for (const auto& s : summaries) {
        out << s.case_id << ',' << format_double(s.age_years) << ',' << bin_label(s.bin) << ','
            << (s.mean_dsc ? format_double(*s.mean_dsc) : "") << ',' << (s.mean_nsd ? format_double(*s.mean_nsd) : "")
            << ',' << s.method << '\n';
    }
    return out.str();
}

std::string export_per_age(const std::vector<MetricResult>& results, const Manifest& manifest,
                           const std::string& method) {
    return per_age_csv(summarize_cases(results, manifest, method));
}

std::vector<CaseSummary> parse_per_age_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<CaseSummary> out;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (f.size() != 6) throw DataError("per-age CSV row needs 6 columns: " + line);
        CaseSummary s;
        s.case_id = f[0];
        s.age_years = std::stod(f[1]);
        s.bin = parse_bin(f[2]);
        if (!f[3].empty()) s.mean_dsc = std::stod(f[3]);
        if (!f[4].empty()) s.mean_nsd = std::stod(f[4]);
        s.method = f[5];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace pedseg
