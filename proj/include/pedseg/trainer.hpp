#pragma once
// Voxel-wise multinomial logistic segmenter trained by mini-batch SGD.
//
// Each voxel is described by seven features:
//   [1, intensity, 3x3x3 box-mean intensity, x, y, z, r]
// with intensities mapped through a fixed window onto [0, 1], coordinates
// normalized to [0, 1] by the volume extent, and r the distance from the
// volume center normalized to [0, 1]. The coordinate features make the model
// deliberately sensitive to body size.
//
// A model has a field of view: the grid dims it was trained on. predict()
// center-crops or pads other inputs to that grid before computing features,
// the way a fixed-input network sees a larger or smaller body.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "pedseg/cohort.hpp"
#include "pedseg/volume.hpp"

namespace pedseg {

inline constexpr std::size_t kNumFeatures = 7;
using FeatureVector = std::array<double, kNumFeatures>;

struct IntensityWindow {
    double lo = -50.0;
    double hi = 200.0;

    friend bool operator==(const IntensityWindow&, const IntensityWindow&) = default;
};

// Clamped affine map of the window onto [0, 1].
double normalize_intensity(double value, const IntensityWindow& window);

// Row-major features, kNumFeatures per voxel.
struct FeatureField {
    Dims dims;
    std::vector<double> values;

    std::span<const double> at(std::size_t voxel) const {
        return std::span<const double>(values).subspan(voxel * kNumFeatures, kNumFeatures);
    }
};

FeatureField extract_features(const ScalarVolume& image, const IntensityWindow& window = {});

// Features of one voxel given the window-normalized intensity volume.
FeatureVector voxel_features(std::span<const double> normalized, const Dims& dims, std::size_t i, std::size_t j,
                             std::size_t k);

struct ModelParams {
    int num_classes = 0;           // organ classes C; the model has C + 1 rows
    std::vector<double> weights;   // (C + 1) x kNumFeatures, row-major
    IntensityWindow window;
    Dims field_of_view;            // zero dims: use each input as is

    ModelParams() = default;
    explicit ModelParams(int classes, IntensityWindow w = {});

    std::size_t rows() const { return static_cast<std::size_t>(num_classes) + 1; }
    double& w(std::size_t row, std::size_t f) { return weights[row * kNumFeatures + f]; }
    double w(std::size_t row, std::size_t f) const { return weights[row * kNumFeatures + f]; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Sample {
    FeatureVector features{};
    int label = 0;
    double weight = 1.0;
};

struct LossGrad {
    double loss = 0.0;            // weighted mean cross-entropy
    std::vector<double> grad;     // same shape as ModelParams::weights
};

// Throws DataError on non-finite features, labels outside [0, C], or a batch
// with no positive weight.
LossGrad loss_and_grad(const ModelParams& params, std::span<const Sample> batch);

// Class probabilities for one feature vector.
std::vector<double> softmax(const ModelParams& params, std::span<const double> features);

struct TrainConfig {
    double learning_rate = 48.0;
    // Per-stage poly decay: epoch e of E uses lr * (1 - e/E)^poly_exponent.
    // 0 keeps the rate constant.
    double poly_exponent = 0.9;
    std::size_t batch_size = 64;
    std::size_t voxels_per_case = 512;
    std::uint64_t seed = 0;
    bool class_balanced = true;
    int num_classes = 19;
    IntensityWindow window;
};

void validate(const TrainConfig& cfg);

// In-memory training case with per-class voxel index lists.
struct TrainingCase {
    Dims dims;
    std::vector<double> normalized;                 // window-normalized intensities
    std::vector<std::uint16_t> labels;
    std::vector<std::vector<std::uint32_t>> class_voxels;  // index = class id
};

// Supplies training cases by id: in-memory inserts first, then the
// manifest's files. Thread-safe; returned references stay valid.
class CaseStore {
public:
    CaseStore(Manifest manifest, IntensityWindow window);

    void insert(const std::string& case_id, const ScalarVolume& image, const LabelVolume& labels);
    // Throws IoError naming the case when its files cannot be read.
    const TrainingCase& get(const std::string& case_id);

    const Manifest& manifest() const { return manifest_; }

private:
    TrainingCase build(const ScalarVolume& image, const LabelVolume& labels) const;

    Manifest manifest_;
    IntensityWindow window_;
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<TrainingCase>> cases_;
};

struct EpochLoss {
    std::size_t stage = 0;
    std::size_t epoch = 0;
    double mean_loss = 0.0;
};

struct TrainResult {
    std::vector<ModelParams> stage_snapshots;  // one per plan stage
    std::vector<EpochLoss> loss_trace;
    ModelParams final_params;
};

// Runs the plan's epochs and case order exactly. Starts from zero weights,
// or from `initial` when given. Bitwise deterministic for fixed inputs.
TrainResult train(const TrainingPlan& plan, CaseStore& store, const TrainConfig& cfg,
                  const ModelParams* initial = nullptr);

// Per-voxel argmax, ties to the lower class. Output num_classes is the
// model's C.
LabelVolume predict(const ModelParams& params, const ScalarVolume& image);

std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(std::string_view text);
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace pedseg
