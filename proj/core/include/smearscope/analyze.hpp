#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smearscope/classification.hpp"
#include "smearscope/preprocess.hpp"
#include "smearscope/segmentation.hpp"

namespace smearscope {

struct PipelineConfig {
    PreprocessConfig preprocess;
    SegmentationConfig segmentation;
    double crop_margin = 0.10;
};

struct CellResult {
    BoundingBox box;  // original-image coordinates
    StageLabel label = StageLabel::Healthy;
    std::vector<double> stage1_probs;
    std::optional<std::vector<double>> stage2_probs;  // TSC only, when stage 2 ran
};

struct StageTimings {
    double preprocess_ms = 0.0;
    double localize_ms = 0.0;
    double classify_ms = 0.0;
    double total_ms = 0.0;
};

struct AnalysisResult {
    std::string image_id;
    int total_cells = 0;
    int infected_cells = 0;  // labels != healthy
    std::vector<CellResult> cells;
    StageTimings timings;
    std::string pipeline_config_hash;
};

/// FNV-1a over the canonical (model + pipeline config) JSON.
std::string pipeline_config_hash(const Model& model, const PipelineConfig& cfg);

/// Preprocess, localize, then crop/featurize/classify each detection.
/// Deterministic per (image, model, config); only the timings vary.
AnalysisResult analyze_image(const RgbImage& img, const Model& model,
                             const PipelineConfig& cfg = {},
                             const std::string& image_id = "");

/// 2-px color-coded rectangle per cell (healthy green, infected stages in
/// distinct warm colors); all other pixels untouched.
RgbImage render_overlay(const RgbImage& img, const AnalysisResult& result);

/// Canonical result JSON. The timings block is the only part that varies
/// between runs, so it can be excluded for byte comparisons.
std::string analysis_result_to_json(const AnalysisResult& result, bool include_timings = true);

}  // namespace smearscope
