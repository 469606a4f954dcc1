#include "smearscope/analyze.hpp"

#include <chrono>

#include <json.hpp>

#include "json_util.hpp"
#include "smearscope/evaluation.hpp"

namespace smearscope {

using nlohmann::json;

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

json pipeline_config_json(const PipelineConfig& cfg) {
    json j;
    j["preprocess"] = {{"skip_vignette", cfg.preprocess.skip_vignette},
                       {"dark_cutoff", cfg.preprocess.dark_cutoff},
                       {"ratio_cutoff", cfg.preprocess.ratio_cutoff}};
    j["segmentation"] = json::parse(segmentation_config_to_json(cfg.segmentation));
    j["crop_margin"] = cfg.crop_margin;
    return j;
}

}  // namespace

std::string pipeline_config_hash(const Model& model, const PipelineConfig& cfg) {
    json j = pipeline_config_json(cfg);
    j["model"] = json::parse(model_to_json(model));
    return detail::to_hex16(detail::fnv1a64(j.dump()));
}

AnalysisResult analyze_image(const RgbImage& img, const Model& model,
                             const PipelineConfig& cfg, const std::string& image_id) {
    AnalysisResult result;
    result.image_id = image_id;
    result.pipeline_config_hash = pipeline_config_hash(model, cfg);

    const auto t_start = std::chrono::steady_clock::now();
    auto [field, crop_report] = preprocess_field(img, cfg.preprocess);
    result.timings.preprocess_ms = ms_since(t_start);

    const auto t_localize = std::chrono::steady_clock::now();
    const auto detections = localize_cells(field, cfg.segmentation);
    result.timings.localize_ms = ms_since(t_localize);

    const auto t_classify = std::chrono::steady_clock::now();
    const int off_x = crop_report.ratio_crop_rect.x;
    const int off_y = crop_report.ratio_crop_rect.y;
    for (const auto& det : detections) {
        const CellCrop crop = extract_crop(field, det.box, cfg.crop_margin, image_id);
        const FeatureVector f = extract_features(crop);

        CellResult cell;
        cell.box = {det.box.x + off_x, det.box.y + off_y, det.box.w, det.box.h};
        if (model.is_tsc()) {
            TscResult r = classify_tsc(model.tsc(), f);
            cell.label = r.label;
            cell.stage1_probs = std::move(r.stage1_probs);
            cell.stage2_probs = std::move(r.stage2_probs);
        } else {
            SscResult r = classify_ssc(model.ssc(), f);
            cell.label = r.label;
            cell.stage1_probs = std::move(r.probs);
        }
        if (is_infected(cell.label)) ++result.infected_cells;
        result.cells.push_back(std::move(cell));
    }
    result.total_cells = static_cast<int>(result.cells.size());
    result.timings.classify_ms = ms_since(t_classify);
    result.timings.total_ms = ms_since(t_start);
    return result;
}

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb stage_color(StageLabel label) {
    switch (label) {
        case StageLabel::Healthy: return {60, 200, 80};
        case StageLabel::Ring: return {255, 180, 0};
        case StageLabel::Trophozoite: return {255, 110, 0};
        case StageLabel::Schizont: return {230, 40, 40};
        case StageLabel::Gametocyte: return {200, 0, 130};
    }
    return {255, 255, 255};
}

}  // namespace

RgbImage render_overlay(const RgbImage& img, const AnalysisResult& result) {
    RgbImage out = img;
    constexpr int kThickness = 2;
    for (const auto& cell : result.cells) {
        const BoundingBox& b = cell.box;
        if (!img.bounds().contains(b))
            throw std::invalid_argument("render_overlay: box outside image bounds");
        const Rgb c = stage_color(cell.label);
        for (int y = b.y; y < b.bottom(); ++y)
            for (int x = b.x; x < b.right(); ++x) {
                const bool border = x - b.x < kThickness || b.right() - 1 - x < kThickness ||
                                    y - b.y < kThickness || b.bottom() - 1 - y < kThickness;
                if (border) out.set_pixel(x, y, c.r, c.g, c.b);
            }
    }
    return out;
}

std::string analysis_result_to_json(const AnalysisResult& result, bool include_timings) {
    json j;
    j["image_id"] = result.image_id;
    j["total_cells"] = result.total_cells;
    j["infected_cells"] = result.infected_cells;
    json cells = json::array();
    for (const auto& cell : result.cells) {
        json jc;
        jc["box"] = {{"x", cell.box.x}, {"y", cell.box.y}, {"w", cell.box.w}, {"h", cell.box.h}};
        jc["label"] = stage_name(cell.label);
        jc["stage1_probs"] = cell.stage1_probs;
        if (cell.stage2_probs) jc["stage2_probs"] = *cell.stage2_probs;
        cells.push_back(std::move(jc));
    }
    j["cells"] = std::move(cells);
    j["pipeline_config_hash"] = result.pipeline_config_hash;
    if (include_timings)
        j["timings"] = {{"preprocess_ms", result.timings.preprocess_ms},
                        {"localize_ms", result.timings.localize_ms},
                        {"classify_ms", result.timings.classify_ms},
                        {"total_ms", result.timings.total_ms}};
    return j.dump(2);
}

}  // namespace smearscope
