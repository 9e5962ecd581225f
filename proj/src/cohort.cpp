#include "pedseg/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pedseg/error.hpp"
#include "pedseg/random.hpp"

namespace pedseg {
namespace {

using nlohmann::json;

constexpr int kAdultAge = 17;

std::vector<const CaseRecord*> train_cases(const Manifest& manifest, Domain domain) {
    std::vector<const CaseRecord*> out;
    for (const auto& c : manifest.cases) {
        if (c.split == Split::train && c.domain == domain) out.push_back(&c);
    }
    std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->case_id < b->case_id; });
    return out;
}

std::vector<std::string> ids_of(const std::vector<const CaseRecord*>& cases) {
    std::vector<std::string> ids;
    ids.reserve(cases.size());
    for (const auto* c : cases) ids.push_back(c->case_id);
    return ids;
}

void require_epochs(int epochs, const char* what) {
    if (epochs < 1) throw ParameterError(std::string(what) + " must be at least 1");
}

PlanStage shuffled_epochs(const std::vector<std::string>& eligible, int epochs, Rng& rng) {
    PlanStage stage;
    for (int e = 0; e < epochs; ++e) {
        auto order = eligible;
        rng.shuffle(std::span<std::string>(order));
        stage.epochs.push_back(std::move(order));
    }
    return stage;
}

json parse_json(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::adult ? "adult" : "pediatric"; }

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Domain parse_domain(std::string_view s) {
    if (s == "adult") return Domain::adult;
    if (s == "pediatric") return Domain::pediatric;
    throw ManifestError("unknown domain '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ManifestError("unknown split '" + std::string(s) + "'");
}

void validate(const CaseRecord& r) {
    if (r.case_id.empty()) throw ManifestError("case with empty case_id");
    if (!std::isfinite(r.age_years) || r.age_years < 0.0)
        throw ManifestError("case " + r.case_id + ": age must be a non-negative number");
    const bool adult_age = std::floor(r.age_years) >= kAdultAge;
    if (adult_age != (r.domain == Domain::adult))
        throw ManifestError("case " + r.case_id + ": domain " + std::string(to_string(r.domain)) +
                            " inconsistent with age " + std::to_string(r.age_years));
    if (r.image_path.empty() || r.label_path.empty())
        throw ManifestError("case " + r.case_id + ": image and label paths must be nonempty");
}

const CaseRecord* Manifest::find(std::string_view case_id) const {
    for (const auto& c : cases) {
        if (c.case_id == case_id) return &c;
    }
    return nullptr;
}

const CaseRecord& Manifest::at(std::string_view case_id) const {
    const auto* c = find(case_id);
    if (!c) throw ManifestError("case '" + std::string(case_id) + "' not in manifest");
    return *c;
}

std::filesystem::path Manifest::resolve(const std::string& relative) const {
    std::filesystem::path p(relative);
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

void validate(const Manifest& manifest) {
    std::set<std::string> seen;
    for (const auto& c : manifest.cases) {
        validate(c);
        if (!seen.insert(c.case_id).second) throw ManifestError("duplicate case_id " + c.case_id);
    }
}

std::string manifest_to_json(const Manifest& manifest) {
    json cases = json::array();
    for (const auto& c : manifest.cases) {
        cases.push_back({{"case_id", c.case_id},
                         {"age_years", c.age_years},
                         {"domain", to_string(c.domain)},
                         {"image", c.image_path},
                         {"label", c.label_path},
                         {"split", to_string(c.split)}});
    }
    return json{{"cases", cases}}.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
    const json doc = parse_json(text, "manifest");
    Manifest m;
    try {
        for (const auto& c : doc.at("cases")) {
            CaseRecord r;
            r.case_id = c.at("case_id").get<std::string>();
            r.age_years = c.at("age_years").get<double>();
            r.domain = parse_domain(c.at("domain").get<std::string>());
            r.image_path = c.at("image").get<std::string>();
            r.label_path = c.at("label").get<std::string>();
            r.split = c.contains("split") ? parse_split(c.at("split").get<std::string>()) : Split::train;
            m.cases.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
    validate(m);
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
    Manifest m = manifest_from_json(read_text_file(path));
    m.base_dir = path.parent_path();
    return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    write_text_file(path, manifest_to_json(manifest));
}

std::string_view bin_label(AgeBin bin) {
    switch (bin) {
        case AgeBin::y0_3: return "0-3";
        case AgeBin::y4_6: return "4-6";
        case AgeBin::y7_9: return "7-9";
        case AgeBin::y10_12: return "10-12";
        case AgeBin::y13_16: return "13-16";
        case AgeBin::y17_plus: return "17+";
    }
    return "?";
}

std::size_t bin_index(AgeBin bin) { return static_cast<std::size_t>(bin); }

std::pair<int, int> bin_years(AgeBin bin) {
    switch (bin) {
        case AgeBin::y0_3: return {0, 3};
        case AgeBin::y4_6: return {4, 6};
        case AgeBin::y7_9: return {7, 9};
        case AgeBin::y10_12: return {10, 12};
        case AgeBin::y13_16: return {13, 16};
        case AgeBin::y17_plus: return {17, -1};
    }
    return {0, 0};
}

AgeBin assign_age_bin(double age_years) {
    if (!std::isfinite(age_years) || age_years < 0.0)
        throw DomainError("age must be a non-negative number, got " + std::to_string(age_years));
    const double years = std::floor(age_years);
    if (years <= 3) return AgeBin::y0_3;
    if (years <= 6) return AgeBin::y4_6;
    if (years <= 9) return AgeBin::y7_9;
    if (years <= 12) return AgeBin::y10_12;
    if (years <= 16) return AgeBin::y13_16;
    return AgeBin::y17_plus;
}

Manifest split_balanced(Manifest manifest, const SplitFractions& fractions, std::uint64_t seed) {
    const std::array<double, 3> f{fractions.train, fractions.val, fractions.test};
    for (double v : f) {
        if (!std::isfinite(v) || v <= 0.0) throw ParameterError("split fractions must be positive");
    }
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ParameterError("split fractions must sum to 1");
    if (manifest.cases.empty()) throw DomainError("cannot split an empty manifest");
    validate(manifest);

    std::array<std::vector<std::size_t>, kNumAgeBins> members;
    for (std::size_t n = 0; n < manifest.cases.size(); ++n)
        members[bin_index(assign_age_bin(manifest.cases[n].age_years))].push_back(n);

    constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};
    for (std::size_t b = 0; b < kNumAgeBins; ++b) {
        auto& idx = members[b];
        if (idx.empty()) continue;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t x, std::size_t y) { return manifest.cases[x].case_id < manifest.cases[y].case_id; });
        Rng rng(derive_seed(seed, b));
        rng.shuffle(std::span<std::size_t>(idx));

        // Largest-remainder apportionment; remainder ties go to the earlier split.
        const double size = static_cast<double>(idx.size());
        std::array<std::size_t, 3> count{};
        std::array<double, 3> remainder{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double quota = size * f[s];
            count[s] = static_cast<std::size_t>(std::floor(quota + 1e-9));
            remainder[s] = quota - static_cast<double>(count[s]);
            assigned += count[s];
        }
        std::array<int, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
        for (std::size_t r = 0; assigned < idx.size(); ++r, ++assigned) ++count[order[r % 3]];

        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t c = 0; c < count[s]; ++c) manifest.cases[idx[pos++]].split = kSplits[s];
        }
    }
    return manifest;
}

std::string_view to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::adult_seg: return "AdultSeg";
        case BaselineKind::pediatric_seg: return "PediatricSeg";
        case BaselineKind::mix_seg: return "MixSeg";
    }
    return "?";
}

TrainingPlan plan_baseline(BaselineKind kind, const Manifest& manifest, int epochs, std::uint64_t seed) {
    require_epochs(epochs, "epochs");
    std::vector<std::string> eligible;
    if (kind != BaselineKind::pediatric_seg) {
        auto ids = ids_of(train_cases(manifest, Domain::adult));
        if (ids.empty()) throw ParameterError(std::string(to_string(kind)) + " needs adult train cases");
        eligible.insert(eligible.end(), ids.begin(), ids.end());
    }
    if (kind != BaselineKind::adult_seg) {
        auto ids = ids_of(train_cases(manifest, Domain::pediatric));
        if (ids.empty()) throw ParameterError(std::string(to_string(kind)) + " needs pediatric train cases");
        eligible.insert(eligible.end(), ids.begin(), ids.end());
    }
    TrainingPlan plan;
    plan.name = std::string(to_string(kind));
    plan.seed = seed;
    Rng rng(seed);
    plan.stages.push_back(shuffled_epochs(eligible, epochs, rng));
    return plan;
}

std::string rehearsal_name(double p) {
    if (p == 0.0) return "Sequential";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "CL(p=%g)", p);
    return buf;
}

TrainingPlan plan_rehearsal(const Manifest& manifest, const RehearsalOptions& options) {
    if (!(options.p >= 0.0 && options.p <= 1.0)) throw ParameterError("rehearsal p must lie in [0, 1]");
    require_epochs(options.stage1_epochs, "stage-1 epochs");
    require_epochs(options.stage2_epochs, "stage-2 epochs");
    const auto adult = ids_of(train_cases(manifest, Domain::adult));
    const auto pediatric = ids_of(train_cases(manifest, Domain::pediatric));
    if (adult.empty()) throw ParameterError("rehearsal plan needs adult train cases");
    if (pediatric.empty()) throw ParameterError("rehearsal plan needs pediatric train cases");

    TrainingPlan plan;
    plan.name = rehearsal_name(options.p);
    plan.p = options.p;
    plan.seed = options.seed;
    plan.fixed_subset = options.fixed_subset;

    // Same stream as plan_baseline(adult_seg) so stage 1 matches it exactly.
    Rng rng(options.seed);
    plan.stages.push_back(shuffled_epochs(adult, options.stage1_epochs, rng));

    std::vector<std::string> fixed;
    if (options.fixed_subset) {
        auto pool = adult;
        rng.shuffle(std::span<std::string>(pool));
        const auto keep = static_cast<std::size_t>(std::llround(options.p * static_cast<double>(pool.size())));
        fixed.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
    }

    PlanStage stage2;
    for (int e = 0; e < options.stage2_epochs; ++e) {
        std::vector<std::string> epoch = pediatric;
        if (options.fixed_subset) {
            epoch.insert(epoch.end(), fixed.begin(), fixed.end());
        } else {
            for (const auto& id : adult) {
                if (rng.bernoulli(options.p)) epoch.push_back(id);
            }
        }
        rng.shuffle(std::span<std::string>(epoch));
        stage2.epochs.push_back(std::move(epoch));
    }
    plan.stages.push_back(std::move(stage2));
    return plan;
}

void validate(const TrainingPlan& plan, const Manifest& manifest) {
    if (!(plan.p >= 0.0 && plan.p <= 1.0)) throw ParameterError("plan p must lie in [0, 1]");
    std::set<std::string> known;
    for (const auto& c : manifest.cases) known.insert(c.case_id);
    for (const auto& stage : plan.stages) {
        for (const auto& epoch : stage.epochs) {
            for (const auto& id : epoch) {
                if (!known.count(id)) throw ManifestError("plan references unknown case '" + id + "'");
            }
        }
    }
}

std::string plan_to_json(const TrainingPlan& plan) {
    json stages = json::array();
    for (const auto& s : plan.stages) {
        stages.push_back({{"epochs", s.epochs.size()}, {"epoch_cases", s.epochs}});
    }
    json doc{{"name", plan.name},
             {"p", plan.p},
             {"seed", plan.seed},
             {"fixed_subset", plan.fixed_subset},
             {"stages", stages}};
    return doc.dump(2) + "\n";
}

TrainingPlan plan_from_json(std::string_view text) {
    const json doc = parse_json(text, "plan");
    TrainingPlan plan;
    try {
        plan.name = doc.at("name").get<std::string>();
        plan.p = doc.at("p").get<double>();
        plan.seed = doc.at("seed").get<std::uint64_t>();
        plan.fixed_subset = doc.value("fixed_subset", false);
        for (const auto& s : doc.at("stages")) {
            PlanStage stage;
            stage.epochs = s.at("epoch_cases").get<std::vector<std::vector<std::string>>>();
            if (s.contains("epochs") && s.at("epochs").get<std::size_t>() != stage.epochs.size())
                throw ManifestError("plan stage epoch count does not match its case lists");
            plan.stages.push_back(std::move(stage));
        }
    } catch (const json::exception& e) {
        throw ManifestError(std::string("plan: ") + e.what());
    }
    return plan;
}

TrainingPlan load_plan(const std::filesystem::path& path) { return plan_from_json(read_text_file(path)); }

void save_plan(const TrainingPlan& plan, const std::filesystem::path& path) {
    write_text_file(path, plan_to_json(plan));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace pedseg
