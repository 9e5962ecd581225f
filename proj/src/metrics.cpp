#include "pedseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pedseg/error.hpp"
#include "pedseg/labelmap.hpp"

namespace pedseg {
namespace {

void require_comparable(const BinaryMask& a, const BinaryMask& b) {
    if (a.dims != b.dims)
        throw ComparisonError("mask dims differ " + to_string(a.dims) + " vs " + to_string(b.dims));
    if (!same_spacing(a.spacing, b.spacing)) throw ComparisonError("mask spacing differs");
    if (a.bits.size() != a.dims.count() || b.bits.size() != b.dims.count())
        throw InvariantError("mask size does not match dims");
}

BinaryMask surface_mask(const BinaryMask& mask, const std::vector<std::size_t>& surface) {
    BinaryMask out(mask.dims, mask.spacing);
    for (std::size_t idx : surface) out.bits[idx] = 1;
    return out;
}

// Number of surface voxels of `from` lying within tau of the surface `to`.
std::size_t within_tolerance(const std::vector<std::size_t>& from, const BinaryMask& to, double tau) {
    const auto dist2 = squared_edt(to);
    const double tau2 = tau * tau;
    std::size_t hits = 0;
    for (std::size_t idx : from) hits += dist2[idx] <= tau2 ? 1 : 0;
    return hits;
}

std::string format_value(const std::optional<double>& v) {
    if (!v) return {};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

void validate(const NsdConfig& cfg) {
    if (!std::isfinite(cfg.tau_mm) || cfg.tau_mm <= 0.0)
        throw ParameterError("NSD tolerance must be positive and finite");
}

std::optional<double> dice(const BinaryMask& a, const BinaryMask& b) {
    require_comparable(a, b);
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.bits.size(); ++n) {
        na += a.bits[n];
        nb += b.bits[n];
        both += a.bits[n] & b.bits[n];
    }
    if (na + nb == 0) return std::nullopt;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> surface_voxels(const BinaryMask& mask) {
    const Dims& d = mask.dims;
    std::vector<std::size_t> out;
    auto fg = [&](std::size_t i, std::size_t j, std::size_t k) { return mask.bits[d.index(i, j, k)] != 0; };
    for (std::size_t k = 0; k < d.nz; ++k) {
        for (std::size_t j = 0; j < d.ny; ++j) {
            for (std::size_t i = 0; i < d.nx; ++i) {
                if (!fg(i, j, k)) continue;
                const bool boundary = i == 0 || i + 1 == d.nx || j == 0 || j + 1 == d.ny || k == 0 ||
                                      k + 1 == d.nz || !fg(i - 1, j, k) || !fg(i + 1, j, k) ||
                                      !fg(i, j - 1, k) || !fg(i, j + 1, k) || !fg(i, j, k - 1) ||
                                      !fg(i, j, k + 1);
                if (boundary) out.push_back(d.index(i, j, k));
            }
        }
    }
    return out;
}

std::optional<double> nsd(const BinaryMask& a, const BinaryMask& b, const NsdConfig& cfg) {
    require_comparable(a, b);
    validate(cfg);
    const bool a_empty = a.empty();
    const bool b_empty = b.empty();
    if (a_empty && b_empty) return std::nullopt;
    if (a_empty || b_empty) return 0.0;

    const auto sa = surface_voxels(a);
    const auto sb = surface_voxels(b);
    const std::size_t hits =
        within_tolerance(sa, surface_mask(b, sb), cfg.tau_mm) + within_tolerance(sb, surface_mask(a, sa), cfg.tau_mm);
    return static_cast<double>(hits) / static_cast<double>(sa.size() + sb.size());
}

BinaryMask class_mask(const LabelVolume& volume, int class_id) {
    BinaryMask m(volume.dims(), volume.spacing());
    const auto labels = volume.labels();
    for (std::size_t n = 0; n < labels.size(); ++n) m.bits[n] = labels[n] == class_id ? 1 : 0;
    return m;
}

std::vector<MetricResult> evaluate_case(const LabelVolume& pred, const LabelVolume& gt, const NsdConfig& cfg,
                                        const std::string& case_id) {
    const std::string who = case_id.empty() ? std::string("case") : "case " + case_id;
    require_same_grid(pred.grid(), gt.grid(), who);
    if (pred.num_classes() != kNumClasses || gt.num_classes() != kNumClasses)
        throw ComparisonError(who + ": both volumes must declare " + std::to_string(kNumClasses) + " classes");
    validate(cfg);

    std::vector<MetricResult> results;
    results.reserve(kNumClasses);
    for (int c = 1; c <= kNumClasses; ++c) {
        const BinaryMask p = class_mask(pred, c);
        const BinaryMask g = class_mask(gt, c);
        MetricResult r;
        r.case_id = case_id;
        r.class_id = c;
        r.gt_voxels = g.count();
        r.pred_voxels = p.count();
        r.dsc = dice(p, g);
        r.nsd = nsd(p, g, cfg);
        results.push_back(std::move(r));
    }
    return results;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricResult>& results, const ClassNamer& namer) {
    out << "case_id,class_id,class_name,dsc,nsd,gt_voxels,pred_voxels,defined\n";
    for (const auto& r : results) {
        out << r.case_id << ',' << r.class_id << ',' << namer(r.class_id) << ',' << format_value(r.dsc) << ','
            << format_value(r.nsd) << ',' << r.gt_voxels << ',' << r.pred_voxels << ',' << (r.defined() ? 1 : 0)
            << '\n';
    }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricResult>& results,
                       const ClassNamer& namer) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_metrics_csv(out, results, namer);
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MetricResult> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file " + path.string());
    std::string line;
    std::vector<MetricResult> out;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 || line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
        try {
            MetricResult r;
            r.case_id = f[0];
            r.class_id = std::stoi(f[1]);
            if (!f[3].empty()) r.dsc = std::stod(f[3]);
            if (!f[4].empty()) r.nsd = std::stod(f[4]);
            r.gt_voxels = std::stoull(f[5]);
            r.pred_voxels = std::stoull(f[6]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed metrics row");
        }
    }
    return out;
}

}  // namespace pedseg
