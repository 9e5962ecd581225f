#include "pedseg/experiment.hpp"

#include <cctype>

#include "json.hpp"
#include "pedseg/error.hpp"
#include "pedseg/labelmap.hpp"
#include "pedseg/parallel.hpp"
#include "pedseg/random.hpp"
#include "pedseg/resample.hpp"

namespace pedseg {
namespace {

constexpr const char* kDaName = "DA";

std::vector<const PhantomCase*> test_cases(const Cohort& cohort, std::optional<Domain> domain = std::nullopt) {
    std::vector<const PhantomCase*> out;
    for (const auto& c : cohort.cases) {
        if (c.record.split == Split::test && (!domain || c.record.domain == *domain)) out.push_back(&c);
    }
    return out;
}

std::vector<MetricResult> evaluate(const std::vector<const PhantomCase*>& cases, const NsdConfig& nsd, int threads,
                                   const std::function<LabelVolume(const ScalarVolume&)>& segment) {
    std::vector<std::vector<MetricResult>> per_case(cases.size());
    parallel_for(cases.size(), threads, [&](std::size_t i) {
        const auto& c = *cases[i];
        const LabelVolume pred = segment(c.image);
        per_case[i] = evaluate_case(LabelVolume(pred.grid(), {pred.labels().begin(), pred.labels().end()}, kNumClasses),
                                    c.labels, nsd, c.record.case_id);
    });
    std::vector<MetricResult> out;
    for (auto& v : per_case) out.insert(out.end(), v.begin(), v.end());
    return out;
}

void summarize(MethodOutcome& m, const Manifest& manifest) {
    m.cases = summarize_cases(m.results, manifest, m.name);
    m.row = aggregate_summaries(m.cases, m.name);
    m.pediatric_mean_dsc = domain_mean_dsc(m.cases, manifest, Domain::pediatric);
    m.adult_mean_dsc = domain_mean_dsc(m.cases, manifest, Domain::adult);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

ExperimentConfig ExperimentConfig::quick(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.cohort.seed = seed;
    // Roughly the 3:1 adult-to-pediatric ratio of the public datasets, with
    // the pediatric ages concentrated in the youngest bins.
    cfg.cohort.n_adult = 180;
    cfg.cohort.n_pediatric = 60;
    cfg.cohort.pediatric_bin_weights = {8, 2, 1, 1, 1};
    cfg.cohort.fractions = {0.6, 0.1, 0.3};
    cfg.baseline_epochs = 24;
    cfg.stage1_epochs = 24;
    cfg.stage2_epochs = 48;
    cfg.train.seed = derive_seed(seed, 1);
    return cfg;
}

ExperimentConfig ExperimentConfig::full(std::uint64_t seed) {
    ExperimentConfig cfg = quick(seed);
    cfg.cohort.n_adult = 360;
    cfg.cohort.n_pediatric = 120;
    cfg.baseline_epochs = 40;
    cfg.stage1_epochs = 40;
    cfg.stage2_epochs = 80;
    cfg.train.voxels_per_case = 1024;
    return cfg;
}

const MethodOutcome& ExperimentResult::method(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.name == name) return m;
    }
    throw ParameterError("no method named " + name);
}

std::optional<double> domain_mean_dsc(const std::vector<CaseSummary>& cases, const Manifest& manifest, Domain domain) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cases) {
        if (!c.mean_dsc || manifest.at(c.case_id).domain != domain) continue;
        sum += *c.mean_dsc;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::string method_slug(const std::string& name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.') {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!out.empty() && out.back() != '_') {
            out += '_';
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult result;
    result.cohort = generate_cohort(cfg.cohort, cfg.threads);
    const Manifest& manifest = result.cohort.manifest;

    CaseStore store(manifest, cfg.train.window);
    for (const auto& c : result.cohort.cases) {
        if (c.record.split == Split::train) store.insert(c.record.case_id, c.image, c.labels);
    }

    // One plan seed for every method, so stage 1 of Sequential/CL(p) is the
    // AdultSeg run itself.
    const std::uint64_t plan_seed = derive_seed(cfg.seed, 2);
    std::vector<MethodOutcome> trained;
    for (BaselineKind kind : {BaselineKind::adult_seg, BaselineKind::pediatric_seg, BaselineKind::mix_seg}) {
        MethodOutcome m;
        m.plan = plan_baseline(kind, manifest, cfg.baseline_epochs, plan_seed);
        m.name = m.plan.name;
        trained.push_back(std::move(m));
    }
    std::vector<double> ps{0.0};
    ps.insert(ps.end(), cfg.rehearsal_p.begin(), cfg.rehearsal_p.end());
    for (double p : ps) {
        MethodOutcome m;
        m.plan = plan_rehearsal(manifest, {p, cfg.stage1_epochs, cfg.stage2_epochs, plan_seed, false});
        m.name = m.plan.name;
        trained.push_back(std::move(m));
    }

    parallel_for(trained.size(), cfg.threads,
                 [&](std::size_t i) { trained[i].model = train(trained[i].plan, store, cfg.train).final_params; });

    const auto tests = test_cases(result.cohort);
    for (auto& m : trained) {
        const ModelParams& model = m.model;
        m.results = evaluate(tests, cfg.nsd, cfg.threads, [&](const ScalarVolume& img) { return predict(model, img); });
        summarize(m, manifest);
    }

    MethodOutcome da;
    da.name = kDaName;
    da.model = trained.front().model;
    const ModelParams& adult_model = da.model;
    const double factor = cfg.da_factor;
    da.results = evaluate(test_cases(result.cohort, Domain::pediatric), cfg.nsd, cfg.threads,
                          [&](const ScalarVolume& img) {
                              return da_upscale_pipeline(
                                  img, [&](const ScalarVolume& up) { return predict(adult_model, up); }, factor);
                          });
    summarize(da, manifest);

    result.methods.push_back(std::move(da));
    for (auto& m : trained) result.methods.push_back(std::move(m));

    std::vector<AggregateRow> rows;
    std::vector<CaseSummary> all_cases;
    for (const auto& m : result.methods) {
        rows.push_back(m.row);
        all_cases.insert(all_cases.end(), m.cases.begin(), m.cases.end());
    }
    result.table_markdown = render(rows, TableFormat::markdown);
    result.table_csv = render(rows, TableFormat::csv);
    result.per_age_csv = per_age_csv(all_cases);
    return result;
}

void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* sub : {"plans", "models", "metrics"}) fs::create_directories(dir / sub);
    write_cohort(result.cohort, dir / "cohort", cfg.threads);

    const ClassMapping names = load_mapping(default_mapping_path());
    const auto& layout = organ_layout();
    const ClassNamer namer = [&](int c) {
        return c >= 1 && c <= static_cast<int>(layout.size()) ? layout[c - 1].name : names.target_name(c);
    };

    nlohmann::json summary = nlohmann::json::object();
    summary["seed"] = cfg.seed;
    summary["methods"] = nlohmann::json::array();
    for (const auto& m : result.methods) {
        const std::string slug = method_slug(m.name);
        if (!m.plan.stages.empty()) {
            save_plan(m.plan, dir / "plans" / (slug + ".json"));
            save_model(m.model, dir / "models" / (slug + ".json"));
        }
        write_metrics_csv(dir / "metrics" / (slug + ".csv"), m.results, namer);

        nlohmann::json bins = nlohmann::json::object();
        for (std::size_t b = 0; b < kNumAgeBins; ++b) {
            const auto& s = m.row.bins[b];
            bins[std::string(bin_label(kAgeBins[b]))] = {
                {"mean_dsc", s.has_values() ? nlohmann::json(s.mean_dsc) : nlohmann::json()},
                {"mean_nsd", s.has_values() ? nlohmann::json(s.mean_nsd) : nlohmann::json()},
                {"n_cases", s.n_cases},
                {"n_undefined", s.n_undefined}};
        }
        summary["methods"].push_back({{"name", m.name},
                                      {"pediatric_mean_dsc", optional_json(m.pediatric_mean_dsc)},
                                      {"adult_mean_dsc", optional_json(m.adult_mean_dsc)},
                                      {"bins", bins}});
    }
    write_text_file(dir / "table.md", result.table_markdown);
    write_text_file(dir / "table.csv", result.table_csv);
    write_text_file(dir / "per_age.csv", result.per_age_csv);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace pedseg
