#include "pedseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "pedseg/error.hpp"
#include "pedseg/random.hpp"
#include "pedseg/volume_io.hpp"

namespace pedseg {
namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "pedseg-voxel-softmax";
constexpr int kModelVersion = 1;

double unit_coordinate(std::size_t i, std::size_t n) {
    return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
}

std::vector<double> normalized_intensities(const ScalarVolume& image, const IntensityWindow& window) {
    const auto data = image.data();
    std::vector<double> out(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) out[n] = normalize_intensity(data[n], window);
    return out;
}

std::ptrdiff_t view_offset(std::size_t image_extent, std::size_t view_extent) {
    const auto diff = static_cast<std::ptrdiff_t>(image_extent) - static_cast<std::ptrdiff_t>(view_extent);
    return diff >= 0 ? diff / 2 : -((-diff + 1) / 2);
}

bool inside(std::ptrdiff_t v, std::size_t n) { return v >= 0 && v < static_cast<std::ptrdiff_t>(n); }

// Center crop/pad of `image` onto `view` dims; padding uses the image minimum.
ScalarVolume to_field_of_view(const ScalarVolume& image, const Dims& view) {
    const Dims& d = image.dims();
    const auto data = image.data();
    const double pad = *std::min_element(data.begin(), data.end());
    const std::array<std::ptrdiff_t, 3> off{view_offset(d.nx, view.nx), view_offset(d.ny, view.ny),
                                            view_offset(d.nz, view.nz)};
    std::vector<double> out(view.count(), pad);
    std::size_t n = 0;
    for (std::size_t k = 0; k < view.nz; ++k) {
        const auto z = static_cast<std::ptrdiff_t>(k) + off[2];
        for (std::size_t j = 0; j < view.ny; ++j) {
            const auto y = static_cast<std::ptrdiff_t>(j) + off[1];
            for (std::size_t i = 0; i < view.nx; ++i, ++n) {
                const auto x = static_cast<std::ptrdiff_t>(i) + off[0];
                if (inside(x, d.nx) && inside(y, d.ny) && inside(z, d.nz))
                    out[n] = image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                      static_cast<std::size_t>(z));
            }
        }
    }
    return ScalarVolume(Grid{view, image.spacing(), image.grid().origin}, std::move(out));
}

// Inverse placement: labels predicted on the view go back onto the image
// grid, background outside the view.
LabelVolume from_field_of_view(const LabelVolume& labels, const Grid& image_grid) {
    const Dims& d = image_grid.dims;
    const Dims& view = labels.dims();
    const std::array<std::ptrdiff_t, 3> off{view_offset(d.nx, view.nx), view_offset(d.ny, view.ny),
                                            view_offset(d.nz, view.nz)};
    std::vector<std::uint16_t> out(d.count(), 0);
    std::size_t n = 0;
    for (std::size_t z = 0; z < d.nz; ++z) {
        const auto k = static_cast<std::ptrdiff_t>(z) - off[2];
        for (std::size_t y = 0; y < d.ny; ++y) {
            const auto j = static_cast<std::ptrdiff_t>(y) - off[1];
            for (std::size_t x = 0; x < d.nx; ++x, ++n) {
                const auto i = static_cast<std::ptrdiff_t>(x) - off[0];
                if (inside(i, view.nx) && inside(j, view.ny) && inside(k, view.nz))
                    out[n] = labels.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                       static_cast<std::size_t>(k));
            }
        }
    }
    return LabelVolume(image_grid, std::move(out), labels.num_classes());
}

LabelVolume predict_on_grid(const ModelParams& params, const ScalarVolume& image) {
    const auto normalized = normalized_intensities(image, params.window);
    const Dims& d = image.dims();
    const std::size_t rows = params.rows();
    std::vector<std::uint16_t> labels(d.count());
    std::size_t n = 0;
    for (std::size_t k = 0; k < d.nz; ++k) {
        for (std::size_t j = 0; j < d.ny; ++j) {
            for (std::size_t i = 0; i < d.nx; ++i, ++n) {
                const FeatureVector phi = voxel_features(normalized, d, i, j, k);
                std::size_t best = 0;
                double best_score = -std::numeric_limits<double>::infinity();
                for (std::size_t r = 0; r < rows; ++r) {
                    double z = 0.0;
                    for (std::size_t f = 0; f < kNumFeatures; ++f) z += params.w(r, f) * phi[f];
                    if (z > best_score) {
                        best_score = z;
                        best = r;
                    }
                }
                labels[n] = static_cast<std::uint16_t>(best);
            }
        }
    }
    return LabelVolume(image.grid(), std::move(labels), params.num_classes);
}

}  // namespace

double normalize_intensity(double value, const IntensityWindow& window) {
    return std::clamp((value - window.lo) / (window.hi - window.lo), 0.0, 1.0);
}

FeatureVector voxel_features(std::span<const double> normalized, const Dims& d, std::size_t i, std::size_t j,
                             std::size_t k) {
    double sum = 0.0;
    int count = 0;
    for (std::ptrdiff_t dz = -1; dz <= 1; ++dz) {
        const auto z = static_cast<std::ptrdiff_t>(k) + dz;
        if (!inside(z, d.nz)) continue;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
            const auto y = static_cast<std::ptrdiff_t>(j) + dy;
            if (!inside(y, d.ny)) continue;
            for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                const auto x = static_cast<std::ptrdiff_t>(i) + dx;
                if (!inside(x, d.nx)) continue;
                sum += normalized[d.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                          static_cast<std::size_t>(z))];
                ++count;
            }
        }
    }
    const double x = unit_coordinate(i, d.nx);
    const double y = unit_coordinate(j, d.ny);
    const double z = unit_coordinate(k, d.nz);
    const double r = std::sqrt((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5) + (z - 0.5) * (z - 0.5)) /
                     std::sqrt(0.75);
    return {1.0, normalized[d.index(i, j, k)], sum / count, x, y, z, r};
}

FeatureField extract_features(const ScalarVolume& image, const IntensityWindow& window) {
    const auto normalized = normalized_intensities(image, window);
    const Dims& d = image.dims();
    FeatureField field{d, std::vector<double>(d.count() * kNumFeatures)};
    std::size_t n = 0;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i, ++n) {
                const auto phi = voxel_features(normalized, d, i, j, k);
                std::copy(phi.begin(), phi.end(), field.values.begin() + static_cast<std::ptrdiff_t>(n * kNumFeatures));
            }
    return field;
}

ModelParams::ModelParams(int classes, IntensityWindow w)
    : num_classes(classes), weights((static_cast<std::size_t>(classes) + 1) * kNumFeatures, 0.0), window(w) {}

std::vector<double> softmax(const ModelParams& params, std::span<const double> features) {
    const std::size_t rows = params.rows();
    std::vector<double> z(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < kNumFeatures; ++f) z[r] += params.w(r, f) * features[f];
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        total += v;
    }
    for (double& v : z) v /= total;
    return z;
}

LossGrad loss_and_grad(const ModelParams& params, std::span<const Sample> batch) {
    const std::size_t rows = params.rows();
    LossGrad out{0.0, std::vector<double>(params.weights.size(), 0.0)};
    std::vector<double> z(rows);
    double total_weight = 0.0;
    for (const Sample& s : batch) {
        for (double v : s.features) {
            if (!std::isfinite(v)) throw DataError("non-finite feature in training batch");
        }
        if (s.label < 0 || s.label > params.num_classes)
            throw DataError("label " + std::to_string(s.label) + " outside [0, " + std::to_string(params.num_classes) +
                            "]");
        if (!std::isfinite(s.weight) || s.weight < 0.0) throw DataError("sample weight must be finite and >= 0");
        if (s.weight == 0.0) continue;

        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t f = 0; f < kNumFeatures; ++f) acc += params.w(r, f) * s.features[f];
            z[r] = acc;
        }
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) sum += std::exp(z[r] - m);
        const double lse = m + std::log(sum);
        out.loss += s.weight * (lse - z[static_cast<std::size_t>(s.label)]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double delta = std::exp(z[r] - lse) - (static_cast<int>(r) == s.label ? 1.0 : 0.0);
            for (std::size_t f = 0; f < kNumFeatures; ++f)
                out.grad[r * kNumFeatures + f] += s.weight * delta * s.features[f];
        }
        total_weight += s.weight;
    }
    if (total_weight <= 0.0) throw DataError("training batch has no positive weight");
    out.loss /= total_weight;
    for (double& g : out.grad) g /= total_weight;
    return out;
}

void validate(const TrainConfig& cfg) {
    if (!std::isfinite(cfg.learning_rate) || cfg.learning_rate <= 0.0)
        throw ParameterError("learning_rate must be positive");
    if (!std::isfinite(cfg.poly_exponent) || cfg.poly_exponent < 0.0)
        throw ParameterError("poly_exponent must be >= 0");
    if (cfg.batch_size == 0) throw ParameterError("batch_size must be positive");
    if (cfg.voxels_per_case == 0) throw ParameterError("voxels_per_case must be positive");
    if (cfg.num_classes < 1 || cfg.num_classes > 65535) throw ParameterError("num_classes must be positive");
    if (!(cfg.window.hi > cfg.window.lo) || !std::isfinite(cfg.window.lo) || !std::isfinite(cfg.window.hi))
        throw ParameterError("intensity window must satisfy lo < hi");
}

CaseStore::CaseStore(Manifest manifest, IntensityWindow window) : manifest_(std::move(manifest)), window_(window) {}

TrainingCase CaseStore::build(const ScalarVolume& image, const LabelVolume& labels) const {
    require_same_grid(image.grid(), labels.grid(), "training case image/label");
    TrainingCase c;
    c.dims = image.dims();
    c.normalized = normalized_intensities(image, window_);
    c.labels.assign(labels.labels().begin(), labels.labels().end());
    c.class_voxels.resize(static_cast<std::size_t>(labels.num_classes()) + 1);
    for (std::size_t n = 0; n < c.labels.size(); ++n) c.class_voxels[c.labels[n]].push_back(static_cast<std::uint32_t>(n));
    return c;
}

void CaseStore::insert(const std::string& case_id, const ScalarVolume& image, const LabelVolume& labels) {
    auto built = std::make_unique<TrainingCase>(build(image, labels));
    std::lock_guard lock(mutex_);
    cases_[case_id] = std::move(built);
}

const TrainingCase& CaseStore::get(const std::string& case_id) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = cases_.find(case_id); it != cases_.end()) return *it->second;
    }
    const CaseRecord& record = manifest_.at(case_id);
    std::unique_ptr<TrainingCase> built;
    try {
        const auto image = read_scalar_volume(manifest_.resolve(record.image_path));
        const auto labels = read_label_volume(manifest_.resolve(record.label_path));
        built = std::make_unique<TrainingCase>(build(image, labels));
    } catch (const Error& e) {
        throw IoError("case " + case_id + ": " + e.what());
    }
    std::lock_guard lock(mutex_);
    auto [it, inserted] = cases_.emplace(case_id, std::move(built));
    return *it->second;
}

TrainResult train(const TrainingPlan& plan, CaseStore& store, const TrainConfig& cfg, const ModelParams* initial) {
    validate(cfg);
    TrainResult result;
    ModelParams params = initial ? *initial : ModelParams(cfg.num_classes, cfg.window);
    if (initial && (params.num_classes != cfg.num_classes || params.window != cfg.window))
        throw ParameterError("initial model does not match the training configuration");

    Rng rng(cfg.seed);
    std::vector<Sample> samples(cfg.voxels_per_case);
    std::vector<std::size_t> present;

    for (std::size_t s = 0; s < plan.stages.size(); ++s) {
        const auto& stage = plan.stages[s];
        for (std::size_t e = 0; e < stage.epochs.size(); ++e) {
            const double lr = cfg.poly_exponent == 0.0
                                  ? cfg.learning_rate
                                  : cfg.learning_rate * std::pow(1.0 - static_cast<double>(e) /
                                                                           static_cast<double>(stage.epochs.size()),
                                                                 cfg.poly_exponent);
            double loss_sum = 0.0;
            std::size_t batches = 0;
            for (const auto& case_id : stage.epochs[e]) {
                const TrainingCase& tc = store.get(case_id);
                if (params.field_of_view.count() == 0) {
                    params.field_of_view = tc.dims;
                } else if (params.field_of_view != tc.dims) {
                    throw DataError("case " + case_id + ": dims " + to_string(tc.dims) +
                                    " differ from the model field of view " + to_string(params.field_of_view));
                }
                present.clear();
                for (std::size_t c = 0; c < tc.class_voxels.size(); ++c) {
                    if (static_cast<int>(c) > cfg.num_classes && !tc.class_voxels[c].empty())
                        throw DataError("case " + case_id + ": label " + std::to_string(c) +
                                        " exceeds the model's classes");
                    if (!tc.class_voxels[c].empty()) present.push_back(c);
                }

                for (auto& sample : samples) {
                    std::size_t voxel;
                    if (cfg.class_balanced) {
                        const auto& pool = tc.class_voxels[present[rng.below(present.size())]];
                        voxel = pool[rng.below(pool.size())];
                    } else {
                        voxel = rng.below(tc.labels.size());
                    }
                    const std::size_t i = voxel % tc.dims.nx;
                    const std::size_t j = (voxel / tc.dims.nx) % tc.dims.ny;
                    const std::size_t k = voxel / (tc.dims.nx * tc.dims.ny);
                    sample.features = voxel_features(tc.normalized, tc.dims, i, j, k);
                    sample.label = tc.labels[voxel];
                    sample.weight = 1.0;
                }

                for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
                    const std::size_t len = std::min(cfg.batch_size, samples.size() - start);
                    const auto step = loss_and_grad(params, std::span<const Sample>(samples).subspan(start, len));
                    for (std::size_t w = 0; w < params.weights.size(); ++w)
                        params.weights[w] -= lr * step.grad[w];
                    loss_sum += step.loss;
                    ++batches;
                }
            }
            result.loss_trace.push_back({s, e, batches ? loss_sum / static_cast<double>(batches) : 0.0});
        }
        result.stage_snapshots.push_back(params);
    }
    result.final_params = params;
    return result;
}

LabelVolume predict(const ModelParams& params, const ScalarVolume& image) {
    if (params.weights.size() != params.rows() * kNumFeatures) throw ParameterError("model weights have the wrong size");
    const Dims& view = params.field_of_view;
    if (view.count() == 0 || view == image.dims()) return predict_on_grid(params, image);
    const LabelVolume in_view = predict_on_grid(params, to_field_of_view(image, view));
    return from_field_of_view(in_view, image.grid());
}

std::string model_to_json(const ModelParams& params) {
    json doc{{"format", kModelFormat},
             {"version", kModelVersion},
             {"num_classes", params.num_classes},
             {"num_features", kNumFeatures},
             {"intensity_window", {params.window.lo, params.window.hi}},
             {"field_of_view", {params.field_of_view.nx, params.field_of_view.ny, params.field_of_view.nz}},
             {"weights", params.weights}};
    return doc.dump(2) + "\n";
}

ModelParams model_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("model: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kModelFormat) throw DataError("model: unknown format");
        if (doc.at("version").get<int>() != kModelVersion) throw DataError("model: unsupported version");
        if (doc.at("num_features").get<std::size_t>() != kNumFeatures) throw DataError("model: feature count mismatch");
        ModelParams p(doc.at("num_classes").get<int>());
        const auto window = doc.at("intensity_window").get<std::vector<double>>();
        const auto fov = doc.at("field_of_view").get<std::vector<std::size_t>>();
        if (window.size() != 2 || fov.size() != 3) throw DataError("model: malformed window or field of view");
        p.window = {window[0], window[1]};
        p.field_of_view = {fov[0], fov[1], fov[2]};
        p.weights = doc.at("weights").get<std::vector<double>>();
        if (p.weights.size() != p.rows() * kNumFeatures) throw DataError("model: weight count mismatch");
        for (double w : p.weights) {
            if (!std::isfinite(w)) throw DataError("model: non-finite weight");
        }
        return p;
    } catch (const json::exception& e) {
        throw DataError(std::string("model: ") + e.what());
    }
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
    write_text_file(path, model_to_json(params));
}

ModelParams load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

}  // namespace pedseg
