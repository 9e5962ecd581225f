// pedseg: phantom generation, training plans, training, inference,
// resampling, label remapping, evaluation, reporting and the end-to-end
// experiment. Logs go to stderr; data goes to files only.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pedseg/cohort.hpp"
#include "pedseg/error.hpp"
#include "pedseg/experiment.hpp"
#include "pedseg/labelmap.hpp"
#include "pedseg/metrics.hpp"
#include "pedseg/parallel.hpp"
#include "pedseg/phantom.hpp"
#include "pedseg/random.hpp"
#include "pedseg/report.hpp"
#include "pedseg/resample.hpp"
#include "pedseg/trainer.hpp"
#include "pedseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace pedseg;

namespace {

struct Globals {
    std::uint64_t seed = 7;
    int threads = 1;
    std::string out_dir;
};

void log(const std::string& msg) { std::cerr << "[pedseg] " << msg << '\n'; }

fs::path output_dir(const std::string& out, const Globals& g, const char* fallback) {
    if (!out.empty()) return out;
    if (!g.out_dir.empty()) return g.out_dir;
    return fallback;
}

fs::path output_file(const std::string& out, const Globals& g, const char* name) {
    if (!out.empty()) return out;
    if (!g.out_dir.empty()) return fs::path(g.out_dir) / name;
    throw ParameterError(std::string("--out is required (or --out-dir for ") + name + ")");
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string organ_name(int c) {
    const auto& layout = organ_layout();
    return c >= 1 && c <= static_cast<int>(layout.size()) ? layout[c - 1].name : "class_" + std::to_string(c);
}

ClassNamer default_namer() {
    try {
        auto mapping = std::make_shared<ClassMapping>(load_mapping(default_mapping_path()));
        return [mapping](int c) { return mapping->target_name(c); };
    } catch (const Error&) {
        return organ_name;
    }
}

// --- phantom -------------------------------------------------------------

struct PhantomOpts {
    int n_adult = 40;
    int n_pediatric = 60;
    std::size_t size = 48;
    double spacing = 2.0;
    int organs = 6;
    double noise = 20.0;
    std::string out;
};

void add_phantom(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<PhantomOpts>();
    auto* cmd = app.add_subcommand("phantom", "Generate a synthetic adult/pediatric cohort");
    cmd->add_option("--n-adult", opts->n_adult, "Adult cases")->capture_default_str();
    cmd->add_option("--n-pediatric", opts->n_pediatric, "Pediatric cases")->capture_default_str();
    cmd->add_option("--size", opts->size, "Voxels per axis")->capture_default_str();
    cmd->add_option("--spacing", opts->spacing, "Voxel spacing (mm)")->capture_default_str();
    cmd->add_option("--organs", opts->organs, "Organs per phantom (1-19)")->capture_default_str();
    cmd->add_option("--noise", opts->noise, "Gaussian noise sigma")->capture_default_str();
    cmd->add_option("--out", opts->out, "Output directory");
    cmd->callback([opts, &g] {
        CohortSpec spec;
        spec.n_adult = opts->n_adult;
        spec.n_pediatric = opts->n_pediatric;
        spec.base.dims = {opts->size, opts->size, opts->size};
        spec.base.spacing = {opts->spacing, opts->spacing, opts->spacing};
        spec.base.num_organs = opts->organs;
        spec.base.noise_sigma = opts->noise;
        spec.seed = g.seed;
        const fs::path dir = output_dir(opts->out, g, "phantom_out");
        log("generating " + std::to_string(spec.n_adult + spec.n_pediatric) + " phantoms");
        const Cohort cohort = generate_cohort(spec, g.threads);
        write_cohort(cohort, dir, g.threads);
        log("wrote " + (dir / "manifest.json").string());
    });
}

// --- plan ----------------------------------------------------------------

struct PlanOpts {
    std::string kind = "cl";
    std::string manifest;
    double p = 0.25;
    int epochs = 10;
    int stage1 = 10;
    int stage2 = 10;
    bool fixed_subset = false;
    std::string out;
};

void add_plan(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<PlanOpts>();
    auto* cmd = app.add_subcommand("plan", "Materialize a training plan");
    cmd->add_option("--kind", opts->kind, "adult|pediatric|mix|sequential|cl")
        ->check(CLI::IsMember({"adult", "pediatric", "mix", "sequential", "cl"}))
        ->capture_default_str();
    cmd->add_option("--manifest", opts->manifest, "Cohort manifest")->required();
    cmd->add_option("--p", opts->p, "Adult rehearsal fraction for cl")->capture_default_str();
    cmd->add_option("--epochs", opts->epochs, "Epochs for baseline plans")->capture_default_str();
    cmd->add_option("--stage1-epochs", opts->stage1, "Adult stage epochs")->capture_default_str();
    cmd->add_option("--stage2-epochs", opts->stage2, "Pediatric stage epochs")->capture_default_str();
    cmd->add_flag("--fixed-subset", opts->fixed_subset, "Draw the rehearsal subset once instead of per epoch");
    cmd->add_option("--out", opts->out, "Plan JSON path");
    cmd->callback([opts, &g] {
        const Manifest manifest = load_manifest(opts->manifest);
        TrainingPlan plan;
        if (opts->kind == "adult") {
            plan = plan_baseline(BaselineKind::adult_seg, manifest, opts->epochs, g.seed);
        } else if (opts->kind == "pediatric") {
            plan = plan_baseline(BaselineKind::pediatric_seg, manifest, opts->epochs, g.seed);
        } else if (opts->kind == "mix") {
            plan = plan_baseline(BaselineKind::mix_seg, manifest, opts->epochs, g.seed);
        } else {
            const double p = opts->kind == "sequential" ? 0.0 : opts->p;
            plan = plan_rehearsal(manifest, {p, opts->stage1, opts->stage2, g.seed, opts->fixed_subset});
        }
        const fs::path out = output_file(opts->out, g, "plan.json");
        ensure_parent(out);
        save_plan(plan, out);
        log("wrote plan " + plan.name + " to " + out.string());
    });
}

// --- train ---------------------------------------------------------------

struct TrainOpts {
    std::string plan;
    std::string manifest;
    std::string init;
    std::string out;
    double lr = TrainConfig{}.learning_rate;
    std::size_t batch = TrainConfig{}.batch_size;
    std::size_t voxels = TrainConfig{}.voxels_per_case;
    bool uniform = false;
};

void add_train(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<TrainOpts>();
    auto* cmd = app.add_subcommand("train", "Train a voxel classifier following a plan");
    cmd->add_option("--plan", opts->plan, "Plan JSON")->required();
    cmd->add_option("--manifest", opts->manifest, "Cohort manifest")->required();
    cmd->add_option("--init", opts->init, "Initial model JSON");
    cmd->add_option("--out", opts->out, "Output directory");
    cmd->add_option("--lr", opts->lr, "Learning rate")->capture_default_str();
    cmd->add_option("--batch-size", opts->batch, "Mini-batch size")->capture_default_str();
    cmd->add_option("--voxels-per-case", opts->voxels, "Sampled voxels per case visit")->capture_default_str();
    cmd->add_flag("--uniform-sampling", opts->uniform, "Sample voxels uniformly instead of class-balanced");
    cmd->callback([opts, &g] {
        const Manifest manifest = load_manifest(opts->manifest);
        const TrainingPlan plan = load_plan(opts->plan);
        TrainConfig cfg;
        cfg.learning_rate = opts->lr;
        cfg.batch_size = opts->batch;
        cfg.voxels_per_case = opts->voxels;
        cfg.class_balanced = !opts->uniform;
        cfg.seed = derive_seed(g.seed, 1);
        std::optional<ModelParams> init;
        if (!opts->init.empty()) {
            init = load_model(opts->init);
            cfg.window = init->window;
        }
        CaseStore store(manifest, cfg.window);
        log("training " + plan.name);
        const TrainResult result = train(plan, store, cfg, init ? &*init : nullptr);
        const fs::path dir = output_dir(opts->out, g, "model");
        fs::create_directories(dir);
        for (std::size_t s = 0; s < result.stage_snapshots.size(); ++s) {
            save_model(result.stage_snapshots[s], dir / ("stage" + std::to_string(s + 1) + ".json"));
        }
        save_model(result.final_params, dir / "final.json");
        std::ostringstream trace;
        trace << "stage,epoch,mean_loss\n";
        char buf[64];
        for (const auto& e : result.loss_trace) {
            std::snprintf(buf, sizeof buf, "%.17g", e.mean_loss);
            trace << e.stage + 1 << ',' << e.epoch + 1 << ',' << buf << '\n';
        }
        write_text_file(dir / "loss.csv", trace.str());
        log("wrote " + (dir / "final.json").string());
    });
}

// --- predict -------------------------------------------------------------

struct PredictOpts {
    std::string model;
    std::string in;
    std::string out;
    double da_scale = 1.0;
};

void add_predict(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<PredictOpts>();
    auto* cmd = app.add_subcommand("predict", "Segment one image");
    cmd->add_option("--model", opts->model, "Model JSON")->required();
    cmd->add_option("--in", opts->in, "Input image")->required();
    cmd->add_option("--out", opts->out, "Output label volume");
    cmd->add_option("--da-scale", opts->da_scale, "Upscale factor applied before inference (1 = off)")
        ->capture_default_str();
    cmd->callback([opts, &g] {
        const ModelParams model = load_model(opts->model);
        const ScalarVolume image = read_scalar_volume(opts->in);
        LabelVolume seg = opts->da_scale == 1.0
                              ? predict(model, image)
                              : da_upscale_pipeline(
                                    image, [&](const ScalarVolume& v) { return predict(model, v); }, opts->da_scale);
        const fs::path out = output_file(opts->out, g, "prediction.nii.gz");
        ensure_parent(out);
        write_volume(seg, out);
        log("wrote " + out.string());
    });
}

// --- resample ------------------------------------------------------------

struct ResampleOpts {
    std::string in;
    std::string out;
    std::optional<double> scale;
    std::optional<double> spacing;
    bool label = false;
};

void add_resample(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<ResampleOpts>();
    auto* cmd = app.add_subcommand("resample", "Resample a volume by a scale factor or to isotropic spacing");
    cmd->add_option("--in", opts->in, "Input volume")->required();
    cmd->add_option("--out", opts->out, "Output volume");
    auto* scale = cmd->add_option("--scale", opts->scale, "Scale factor on voxel counts");
    auto* spacing = cmd->add_option("--spacing", opts->spacing, "Target isotropic spacing (mm)");
    scale->excludes(spacing);
    cmd->add_flag("--label", opts->label, "Treat input as a label map (nearest neighbour)");
    cmd->callback([opts, &g] {
        if (!opts->scale && !opts->spacing) throw ParameterError("one of --scale or --spacing is required");
        ResampleTarget target = opts->scale ? ResampleTarget(ScaleFactor{*opts->scale})
                                            : ResampleTarget(TargetSpacing{{*opts->spacing, *opts->spacing,
                                                                            *opts->spacing}});
        const fs::path out = output_file(opts->out, g, "resampled.nii.gz");
        ensure_parent(out);
        if (opts->label) {
            write_volume(resample_label(read_label_volume(opts->in), target), out);
        } else {
            write_volume(resample_scalar(read_scalar_volume(opts->in), target), out);
        }
        log("wrote " + out.string());
    });
}

// --- remap ---------------------------------------------------------------

struct RemapOpts {
    std::string mapping;
    std::string in;
    std::string out;
    std::string unmapped = "error";
};

void add_remap(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<RemapOpts>();
    auto* cmd = app.add_subcommand("remap", "Map source labels onto the 19 shared classes");
    cmd->add_option("--mapping", opts->mapping, "Mapping CSV (default: bundled class_mapping_19.csv)");
    cmd->add_option("--in", opts->in, "Input label volume")->required();
    cmd->add_option("--out", opts->out, "Output label volume");
    cmd->add_option("--unmapped", opts->unmapped, "Policy for unlisted labels: error|background")
        ->check(CLI::IsMember({"error", "background"}))
        ->capture_default_str();
    cmd->callback([opts, &g] {
        const UnmappedPolicy policy =
            opts->unmapped == "background" ? UnmappedPolicy::to_background : UnmappedPolicy::error;
        const fs::path mpath = opts->mapping.empty() ? default_mapping_path() : fs::path(opts->mapping);
        const ClassMapping mapping = load_mapping(mpath, policy);
        RemapReport report;
        const LabelVolume out_vol = remap(read_label_volume(opts->in), mapping, &report);
        if (report.unmapped_voxels > 0) {
            log(std::to_string(report.unmapped_voxels) + " voxels in " +
                std::to_string(report.unmapped_labels.size()) + " unmapped labels set to background");
        }
        const fs::path out = output_file(opts->out, g, "remapped.nii.gz");
        ensure_parent(out);
        write_volume(out_vol, out);
        log("wrote " + out.string());
    });
}

// --- eval ----------------------------------------------------------------

struct EvalOpts {
    std::string pred_dir;
    std::string gt_dir;
    std::string manifest;
    double tau = 3.0;
    std::string split = "test";
    std::string out;
};

fs::path find_prediction(const fs::path& dir, const std::string& case_id) {
    for (const char* ext : {".nii.gz", ".nii", ".psv"}) {
        const fs::path p = dir / (case_id + ext);
        if (fs::exists(p)) return p;
    }
    throw IoError("case " + case_id + ": no prediction in " + dir.string());
}

void add_eval(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<EvalOpts>();
    auto* cmd = app.add_subcommand("eval", "Per-class DSC and NSD for predictions against ground truth");
    cmd->add_option("--pred-dir", opts->pred_dir, "Directory with <case_id>.nii.gz predictions")->required();
    cmd->add_option("--gt-dir", opts->gt_dir, "Ground-truth root (default: manifest directory)");
    cmd->add_option("--manifest", opts->manifest, "Cohort manifest")->required();
    cmd->add_option("--tau", opts->tau, "NSD tolerance (mm)")->capture_default_str();
    cmd->add_option("--split", opts->split, "train|val|test|all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    cmd->add_option("--out", opts->out, "Metrics CSV");
    cmd->callback([opts, &g] {
        const NsdConfig nsd{opts->tau};
        validate(nsd);
        const Manifest manifest = load_manifest(opts->manifest);
        std::vector<const CaseRecord*> cases;
        for (const auto& c : manifest.cases) {
            if (opts->split == "all" || parse_split(opts->split) == c.split) cases.push_back(&c);
        }
        std::vector<std::vector<MetricResult>> per_case(cases.size());
        parallel_for(cases.size(), g.threads, [&](std::size_t i) {
            const CaseRecord& rec = *cases[i];
            const fs::path gt_path =
                opts->gt_dir.empty() ? manifest.resolve(rec.label_path) : fs::path(opts->gt_dir) / rec.label_path;
            try {
                const LabelVolume pred = read_label_volume(find_prediction(opts->pred_dir, rec.case_id), kNumClasses);
                const LabelVolume gt = read_label_volume(gt_path, kNumClasses);
                per_case[i] = evaluate_case(pred, gt, nsd, rec.case_id);
            } catch (const ComparisonError&) {
                throw;
            } catch (const RuntimeFailure& e) {
                throw DataError("case " + rec.case_id + ": " + e.what());
            }
        });
        std::vector<MetricResult> all;
        for (auto& v : per_case) all.insert(all.end(), v.begin(), v.end());
        const fs::path out = output_file(opts->out, g, "metrics.csv");
        ensure_parent(out);
        write_metrics_csv(out, all, default_namer());
        log("evaluated " + std::to_string(cases.size()) + " cases, wrote " + out.string());
    });
}

// --- report --------------------------------------------------------------

struct ReportOpts {
    std::vector<std::string> metrics;
    std::vector<std::string> names;
    std::string manifest;
    std::string format = "markdown";
    bool micro = false;
    std::string out;
    std::string per_age;
};

void add_report(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<ReportOpts>();
    auto* cmd = app.add_subcommand("report", "Age-binned DSC/NSD table from metrics CSVs");
    cmd->add_option("--metrics", opts->metrics, "Metrics CSVs, one per method")->required();
    cmd->add_option("--names", opts->names, "Method names (default: file stems)");
    cmd->add_option("--manifest", opts->manifest, "Cohort manifest")->required();
    cmd->add_option("--format", opts->format, "markdown|csv")
        ->check(CLI::IsMember({"markdown", "csv"}))
        ->capture_default_str();
    cmd->add_flag("--micro", opts->micro, "Average over (case, class) pairs instead of per case");
    cmd->add_option("--out", opts->out, "Table output path");
    cmd->add_option("--per-age", opts->per_age, "Also write per-case mean DSC/NSD CSV");
    cmd->callback([opts, &g] {
        if (!opts->names.empty() && opts->names.size() != opts->metrics.size()) {
            throw ParameterError("--names must match --metrics in count");
        }
        const Manifest manifest = load_manifest(opts->manifest);
        std::vector<AggregateRow> rows;
        std::string per_age;
        for (std::size_t i = 0; i < opts->metrics.size(); ++i) {
            const std::string name =
                opts->names.empty() ? fs::path(opts->metrics[i]).stem().string() : opts->names[i];
            const auto results = read_metrics_csv(opts->metrics[i]);
            rows.push_back(aggregate(results, manifest, name, opts->micro ? Averaging::micro : Averaging::macro));
            if (!opts->per_age.empty()) {
                std::string part = export_per_age(results, manifest, name);
                if (!per_age.empty()) part = part.substr(part.find('\n') + 1);
                per_age += part;
            }
        }
        const fs::path out = output_file(opts->out, g, opts->format == "csv" ? "table.csv" : "table.md");
        ensure_parent(out);
        write_text_file(out, render(rows, opts->format == "csv" ? TableFormat::csv : TableFormat::markdown));
        if (!opts->per_age.empty()) {
            ensure_parent(opts->per_age);
            write_text_file(opts->per_age, per_age);
        }
        log("wrote " + out.string());
    });
}

// --- experiment ----------------------------------------------------------

struct ExperimentOpts {
    bool quick = false;
    bool full = false;
    std::string out;
};

void add_experiment(CLI::App& app, Globals& g) {
    auto opts = std::make_shared<ExperimentOpts>();
    auto* cmd = app.add_subcommand("experiment", "Run the full phantom comparison and write the age-binned table");
    auto* quick = cmd->add_flag("--quick", opts->quick, "Small cohort, few epochs (default)");
    auto* full = cmd->add_flag("--full", opts->full, "Larger cohort and longer training");
    quick->excludes(full);
    cmd->add_option("--out", opts->out, "Output directory (overrides --out-dir)");
    cmd->callback([opts, &g] {
        ExperimentConfig cfg = opts->full ? ExperimentConfig::full(g.seed) : ExperimentConfig::quick(g.seed);
        cfg.threads = g.threads;
        const fs::path dir = output_dir(opts->out, g, "experiment_out");
        const auto t0 = std::chrono::steady_clock::now();
        log(std::string("running ") + (opts->full ? "full" : "quick") + " experiment");
        const ExperimentResult result = run_experiment(cfg);
        write_experiment(result, cfg, dir);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", secs);
        log(std::string("done in ") + buf + " s, wrote " + (dir / "table.md").string());
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pedseg: age-aware organ segmentation toolkit on synthetic CT phantoms"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory");

    add_phantom(app, g);
    add_plan(app, g);
    add_train(app, g);
    add_predict(app, g);
    add_resample(app, g);
    add_remap(app, g);
    add_eval(app, g);
    add_report(app, g);
    add_experiment(app, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
