#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "smearscope/classification.hpp"
#include "smearscope/dataset.hpp"
#include "smearscope/segmentation.hpp"

namespace smearscope {

// ============================================================================
// Detection matching
// ============================================================================

/// Intersection over union of two boxes; 0 when disjoint.
double iou(const BoundingBox& a, const BoundingBox& b);

struct DetectionMatch {
    int gt_index = 0;
    int pred_index = 0;
    double iou = 0.0;
};

struct DetectionMatchResult {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    std::vector<DetectionMatch> matches;
};

/// Greedy one-to-one matching in descending IoU order (ties: lower gt index,
/// then lower pred index); pairs at or below `thresh` never match.
DetectionMatchResult match_detections(const std::vector<BoundingBox>& gt,
                                      const std::vector<BoundingBox>& pred,
                                      double thresh = 0.5);

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Standard definitions with the 0/0 -> 0 convention.
PrecisionRecallF1 precision_recall_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn);

/// Harmonic mean 2PR/(P+R), 0 when both are 0.
double f1_score(double precision, double recall);

// ============================================================================
// Classification metrics
// ============================================================================

/// Rows = ground truth, columns = predicted.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::int64_t> counts;  // K x K row-major

    int k() const { return static_cast<int>(class_names.size()); }
    std::int64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * k() + pred];
    }
    std::int64_t& at(int gt, int pred) {
        return counts[static_cast<std::size_t>(gt) * k() + pred];
    }
    std::int64_t row_sum(int gt) const;
    std::int64_t col_sum(int pred) const;
};

/// Throws std::invalid_argument on length mismatch or out-of-range labels.
ConfusionMatrix confusion_matrix(const std::vector<int>& gt_labels,
                                 const std::vector<int>& pred_labels,
                                 const std::vector<std::string>& class_names);

struct MacroAccuracy {
    double value = 0.0;
    /// Classes with zero ground-truth samples, excluded from the mean.
    std::vector<int> excluded_classes;
};

/// Mean of per-class accuracy (diagonal / row sum, i.e. per-class recall)
/// over the classes that have ground-truth samples. Throws
/// std::runtime_error when no class has samples.
MacroAccuracy macro_average_accuracy(const ConfusionMatrix& cm);

/// Unweighted mean of per-class F1 over all classes (0/0 counts as 0).
double macro_f1(const ConfusionMatrix& cm);

// ============================================================================
// Dataset splitting
// ============================================================================

struct SplitAssignment {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> val;
    std::array<double, 3> fractions{0.7, 0.2, 0.1};
    std::uint64_t seed = 0;
};

/// Seeded per-image split: shuffle, take floor(f*n) per bucket in
/// train/test/val order, remainder to train. Throws std::invalid_argument
/// when n < 3 or the fractions do not sum to 1.
SplitAssignment split_dataset(const std::vector<std::string>& image_ids,
                              const std::array<double, 3>& fractions, std::uint64_t seed);

// ============================================================================
// End-to-end evaluation
// ============================================================================

struct LocalizationImageStat {
    std::string image_id;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

struct LocalizationReport {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    PrecisionRecallF1 metrics;  // micro-aggregated over all images
    std::vector<LocalizationImageStat> per_image;
    SegmentationConfig config;
    double iou_threshold = 0.5;

    std::string to_json() const;
};

/// Run localize_cells over every manifest image and match against ground
/// truth at IoU > 0.5; counts are aggregated across images before computing
/// P/R/F1. Throws std::runtime_error ("no images") on an empty manifest.
LocalizationReport evaluate_localization(const Manifest& manifest,
                                         const SegmentationConfig& seg_cfg = {});

/// Labeled feature vectors for the given manifest images (all images when
/// image_ids is empty), cropped from ground-truth boxes.
std::vector<LabeledCell> extract_labeled_cells(const Manifest& manifest,
                                               const std::vector<std::string>& image_ids = {},
                                               double crop_margin = 0.10);

struct ClassificationEvalConfig {
    ModelKind kind = ModelKind::Tsc;
    std::array<double, 3> fractions{0.7, 0.2, 0.1};
    std::uint64_t seed = 1;
    TrainConfig train;
    /// Ground-truth boxes isolate classification from localization; set to
    /// true to crop from predicted boxes instead (end-to-end mode, unmatched
    /// predictions are dropped).
    bool use_predicted_boxes = false;
    SegmentationConfig segmentation;  // only used in end-to-end mode
    double crop_margin = 0.10;
};

struct PerClassStat {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct ClassificationReport {
    ModelKind kind = ModelKind::Ssc;
    SplitAssignment split;
    ConfusionMatrix confusion;
    MacroAccuracy macro_accuracy;
    double macro_f1_value = 0.0;
    std::vector<PerClassStat> per_class;
    std::int64_t train_cells = 0;
    std::int64_t test_cells = 0;
    Model model;

    std::string to_json() const;
};

/// Train on the train split (TSC: stage 1 on everything, stage 2 on the
/// balanced subset) and score the test split. Throws std::runtime_error
/// naming the class when one is missing from the train split.
ClassificationReport evaluate_classification(const Manifest& manifest,
                                             const ClassificationEvalConfig& cfg);

/// Config echo used by the report serializers and by the pipeline hash.
std::string segmentation_config_to_json(const SegmentationConfig& cfg);
SegmentationConfig segmentation_config_from_json(const std::string& json_text);

}  // namespace smearscope
