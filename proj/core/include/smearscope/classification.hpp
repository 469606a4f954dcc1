#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smearscope/image.hpp"

namespace smearscope {

// ============================================================================
// Labels
// ============================================================================

/// Five-way life-cycle taxonomy. Healthy is the unique non-infected label.
enum class StageLabel : int {
    Healthy = 0,
    Ring = 1,
    Trophozoite = 2,
    Schizont = 3,
    Gametocyte = 4,
};

inline constexpr int kNumStages = 5;

/// Lowercase wire names ("healthy", "ring", ...).
const std::string& stage_name(StageLabel label);
const std::vector<std::string>& stage_names();

/// Case-insensitive parse; throws std::invalid_argument on unknown names.
StageLabel stage_from_string(const std::string& name);

inline bool is_infected(StageLabel label) { return label != StageLabel::Healthy; }

// ============================================================================
// Crops and features
// ============================================================================

inline constexpr int kCropSize = 64;

/// A cell cutout normalized to kCropSize x kCropSize.
struct CellCrop {
    RgbImage pixels;
    BoundingBox source_box;
    std::string source_image_id;
};

/// Expand the box by `margin` per side (clamped to the image) and resample
/// to kCropSize x kCropSize with corner-aligned bilinear interpolation.
/// Throws std::invalid_argument on a degenerate or out-of-bounds box.
CellCrop extract_crop(const RgbImage& img, const BoundingBox& box, double margin = 0.10,
                      const std::string& source_image_id = "");

inline constexpr int kFeatureDim = 30;
inline constexpr const char* kFeatureSpec = "hist8x3+shape3+stain3";

/// Handcrafted crop descriptor:
///   [0..23]  8-bin normalized histogram per RGB channel
///   [24..26] cell-mask area fraction, perimeter/area, circularity 4*pi*A/P^2
///   [27..29] central 32x32 mean and stddev of gray (scaled to [0,1]),
///            dark-pixel fraction (gray < 100)
/// The cell mask is the dark side of the crop's own Otsu threshold; the last
/// three features target the dark chromatin stain.
struct FeatureVector {
    std::array<double, kFeatureDim> values{};
};

FeatureVector extract_features(const CellCrop& crop);

// ============================================================================
// Softmax classifier
// ============================================================================

/// Linear multinomial model over FeatureVector.
struct SoftmaxClassifier {
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<double> weights;  // num_classes x kFeatureDim, row-major
    std::vector<double> bias;     // num_classes

    double& weight(int c, int j) { return weights[static_cast<std::size_t>(c) * kFeatureDim + j]; }
    double weight(int c, int j) const {
        return weights[static_cast<std::size_t>(c) * kFeatureDim + j];
    }
    /// Throws std::invalid_argument on inconsistent dimensions.
    void validate() const;
};

/// softmax(W f + b); components positive and summing to 1.
std::vector<double> predict(const SoftmaxClassifier& clf, const FeatureVector& f);

struct TrainExample {
    FeatureVector features;
    int label = 0;  // in [0, num_classes)
};

struct TrainConfig {
    double learning_rate = 1.0;
    int epochs = 800;
    double l2 = 1e-4;
    std::uint64_t seed = 1;
};

/// Cross-entropy + (l2/2)*||W||^2 on the full batch; used both by train()
/// and by the finite-difference checks.
double training_loss(const SoftmaxClassifier& clf, const std::vector<TrainExample>& data,
                     double l2);
void training_gradient(const SoftmaxClassifier& clf, const std::vector<TrainExample>& data,
                       double l2, std::vector<double>& grad_weights,
                       std::vector<double>& grad_bias);

/// Full-batch gradient descent from a seeded small-random init; bit-exact
/// reproducible for a fixed seed. Throws std::runtime_error ("empty class")
/// when some class has no examples.
SoftmaxClassifier train(int num_classes, const std::vector<std::string>& class_names,
                        const std::vector<TrainExample>& data, const TrainConfig& cfg);

// ============================================================================
// Cascade
// ============================================================================

/// Binary healthy/infected gate followed by a five-way stage classifier that
/// may itself output Healthy (rescuing stage-1 false positives).
struct CascadeModel {
    SoftmaxClassifier stage1;  // 2 classes: healthy, infected
    SoftmaxClassifier stage2;  // kNumStages classes, Healthy included

    void validate() const;
};

struct LabeledCell {
    FeatureVector features;
    StageLabel label = StageLabel::Healthy;
};

/// Balanced training subset for the cascade's second stage: every infected
/// cell is kept; healthy cells are sampled without replacement down to
/// round(mean of the four infected-class counts), or all of them if fewer
/// exist. Throws std::runtime_error when an infected class is empty.
std::vector<LabeledCell> balanced_stage2_subset(const std::vector<LabeledCell>& data,
                                                std::uint64_t seed);

struct SscResult {
    StageLabel label = StageLabel::Healthy;
    std::vector<double> probs;  // 5
};

struct TscResult {
    StageLabel label = StageLabel::Healthy;
    std::vector<double> stage1_probs;                 // 2: healthy, infected
    std::optional<std::vector<double>> stage2_probs;  // present iff stage 2 ran
};

/// Argmax over the five labels; ties break to the lowest label id.
SscResult classify_ssc(const SoftmaxClassifier& model, const FeatureVector& f);
SscResult classify_ssc(const SoftmaxClassifier& model, const CellCrop& crop);

/// Stage 1 argmax healthy short-circuits (stage 2 is not evaluated);
/// otherwise stage 2's argmax is final and may be Healthy.
TscResult classify_tsc(const CascadeModel& model, const FeatureVector& f);
TscResult classify_tsc(const CascadeModel& model, const CellCrop& crop);

// ============================================================================
// Model persistence
// ============================================================================

/// Either a single five-way classifier (SSC) or the two-stage cascade (TSC).
struct Model {
    std::variant<SoftmaxClassifier, CascadeModel> impl;

    bool is_tsc() const { return std::holds_alternative<CascadeModel>(impl); }
    const SoftmaxClassifier& ssc() const { return std::get<SoftmaxClassifier>(impl); }
    const CascadeModel& tsc() const { return std::get<CascadeModel>(impl); }
};

enum class ModelKind { Ssc, Tsc };

/// Train a full model from labeled cells. SSC is one five-way classifier
/// over everything; TSC trains the binary gate over everything (cfg.seed)
/// and the five-way stage 2 over the balanced subset (cfg.seed + 1, healthy
/// sampling from balance_seed).
Model train_model(ModelKind kind, const std::vector<LabeledCell>& cells,
                  const TrainConfig& cfg, std::uint64_t balance_seed);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& json_text);
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

/// FNV-1a over the canonical model JSON, as a 16-hex-digit string.
std::string model_hash(const Model& model);

}  // namespace smearscope
