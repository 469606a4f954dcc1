#include "smearscope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "json_util.hpp"
#include "smearscope/image_io.hpp"
#include "smearscope/rng.hpp"

namespace smearscope {

using nlohmann::json;

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (a.w < 1 || a.h < 1 || b.w < 1 || b.h < 1)
        throw std::invalid_argument("iou: degenerate box");
    const int ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const int iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (ix <= 0 || iy <= 0) return 0.0;
    const std::int64_t inter = static_cast<std::int64_t>(ix) * iy;
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

DetectionMatchResult match_detections(const std::vector<BoundingBox>& gt,
                                      const std::vector<BoundingBox>& pred, double thresh) {
    if (!(thresh > 0.0 && thresh < 1.0))
        throw std::invalid_argument("match_detections: thresh must be in (0,1)");

    struct Candidate {
        double iou;
        int gt_index;
        int pred_index;
    };
    std::vector<Candidate> candidates;
    for (int i = 0; i < static_cast<int>(gt.size()); ++i)
        for (int j = 0; j < static_cast<int>(pred.size()); ++j) {
            const double v = iou(gt[i], pred[j]);
            if (v > thresh) candidates.push_back({v, i, j});
        }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt_index != b.gt_index) return a.gt_index < b.gt_index;
        return a.pred_index < b.pred_index;
    });

    DetectionMatchResult result;
    std::vector<std::uint8_t> gt_used(gt.size(), 0), pred_used(pred.size(), 0);
    for (const auto& c : candidates) {
        if (gt_used[c.gt_index] || pred_used[c.pred_index]) continue;
        gt_used[c.gt_index] = 1;
        pred_used[c.pred_index] = 1;
        result.matches.push_back({c.gt_index, c.pred_index, c.iou});
    }
    result.tp = static_cast<int>(result.matches.size());
    result.fp = static_cast<int>(pred.size()) - result.tp;
    result.fn = static_cast<int>(gt.size()) - result.tp;
    return result;
}

double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PrecisionRecallF1 precision_recall_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    if (tp < 0 || fp < 0 || fn < 0)
        throw std::invalid_argument("precision_recall_f1: negative count");
    PrecisionRecallF1 out;
    out.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = f1_score(out.precision, out.recall);
    return out;
}

// ============================================================================
// Classification metrics
// ============================================================================

std::int64_t ConfusionMatrix::row_sum(int gt) const {
    std::int64_t s = 0;
    for (int p = 0; p < k(); ++p) s += at(gt, p);
    return s;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
    std::int64_t s = 0;
    for (int g = 0; g < k(); ++g) s += at(g, pred);
    return s;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& gt_labels,
                                 const std::vector<int>& pred_labels,
                                 const std::vector<std::string>& class_names) {
    if (gt_labels.size() != pred_labels.size())
        throw std::invalid_argument("confusion_matrix: label list length mismatch");
    const int k = static_cast<int>(class_names.size());
    ConfusionMatrix cm;
    cm.class_names = class_names;
    cm.counts.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < gt_labels.size(); ++i) {
        const int g = gt_labels[i];
        const int p = pred_labels[i];
        if (g < 0 || g >= k || p < 0 || p >= k)
            throw std::invalid_argument("confusion_matrix: label out of range");
        ++cm.at(g, p);
    }
    return cm;
}

MacroAccuracy macro_average_accuracy(const ConfusionMatrix& cm) {
    MacroAccuracy out;
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < cm.k(); ++c) {
        const std::int64_t row = cm.row_sum(c);
        if (row == 0) {
            out.excluded_classes.push_back(c);
            continue;
        }
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        ++counted;
    }
    if (counted == 0) throw std::runtime_error("macro_average_accuracy: no samples");
    out.value = sum / counted;
    return out;
}

double macro_f1(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (int c = 0; c < cm.k(); ++c) {
        const std::int64_t col = cm.col_sum(c);
        const std::int64_t row = cm.row_sum(c);
        const double p = col > 0 ? static_cast<double>(cm.at(c, c)) / col : 0.0;
        const double r = row > 0 ? static_cast<double>(cm.at(c, c)) / row : 0.0;
        sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return sum / cm.k();
}

// ============================================================================
// Splitting
// ============================================================================

SplitAssignment split_dataset(const std::vector<std::string>& image_ids,
                              const std::array<double, 3>& fractions, std::uint64_t seed) {
    const std::size_t n = image_ids.size();
    if (n < 3) throw std::invalid_argument("split_dataset: need at least 3 images");
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_dataset: fractions must sum to 1");

    std::vector<std::string> shuffled = image_ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t n_train = static_cast<std::size_t>(fractions[0] * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(fractions[1] * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(fractions[2] * static_cast<double>(n));

    SplitAssignment out;
    out.fractions = fractions;
    out.seed = seed;
    std::size_t i = 0;
    for (; i < n_train; ++i) out.train.push_back(shuffled[i]);
    for (; i < n_train + n_test; ++i) out.test.push_back(shuffled[i]);
    for (; i < n_train + n_test + n_val; ++i) out.val.push_back(shuffled[i]);
    for (; i < n; ++i) out.train.push_back(shuffled[i]);  // remainder to train
    return out;
}

// ============================================================================
// Localization evaluation
// ============================================================================

namespace {

json prf_to_json(const PrecisionRecallF1& m) {
    return json{{"precision", detail::round4(m.precision)},
                {"recall", detail::round4(m.recall)},
                {"f1", detail::round4(m.f1)}};
}

json confusion_to_json(const ConfusionMatrix& cm) {
    json rows = json::array();
    for (int g = 0; g < cm.k(); ++g) {
        json row = json::array();
        for (int p = 0; p < cm.k(); ++p) row.push_back(cm.at(g, p));
        rows.push_back(std::move(row));
    }
    return json{{"class_names", cm.class_names}, {"counts", std::move(rows)}};
}

const char* se_shape_name(SEShape s) {
    switch (s) {
        case SEShape::Disk: return "disk";
        case SEShape::Square: return "square";
        case SEShape::Cross: return "cross";
    }
    return "disk";
}

SEShape se_shape_from_name(const std::string& s) {
    if (s == "disk") return SEShape::Disk;
    if (s == "square") return SEShape::Square;
    if (s == "cross") return SEShape::Cross;
    throw std::runtime_error("unknown structuring element shape: " + s);
}

json se_to_json(const StructuringElement& se) {
    return json{{"shape", se_shape_name(se.shape)}, {"radius", se.radius}};
}

}  // namespace

std::string segmentation_config_to_json(const SegmentationConfig& cfg) {
    json j;
    j["grid_rows"] = cfg.grid_rows;
    j["grid_cols"] = cfg.grid_cols;
    j["open_se"] = se_to_json(cfg.open_se);
    j["erode_se"] = se_to_json(cfg.erode_se);
    j["erode_iters"] = cfg.erode_iters;
    j["marker_fraction"] = cfg.marker_fraction;
    j["min_area_fraction"] = cfg.min_area_fraction;
    return j.dump();
}

SegmentationConfig segmentation_config_from_json(const std::string& json_text) {
    const json j = json::parse(json_text);
    SegmentationConfig cfg;
    cfg.grid_rows = j.value("grid_rows", cfg.grid_rows);
    cfg.grid_cols = j.value("grid_cols", cfg.grid_cols);
    if (j.contains("open_se"))
        cfg.open_se = {se_shape_from_name(j["open_se"].at("shape").get<std::string>()),
                       j["open_se"].at("radius").get<int>()};
    if (j.contains("erode_se"))
        cfg.erode_se = {se_shape_from_name(j["erode_se"].at("shape").get<std::string>()),
                        j["erode_se"].at("radius").get<int>()};
    cfg.erode_iters = j.value("erode_iters", cfg.erode_iters);
    cfg.marker_fraction = j.value("marker_fraction", cfg.marker_fraction);
    cfg.min_area_fraction = j.value("min_area_fraction", cfg.min_area_fraction);
    cfg.validate();
    return cfg;
}

LocalizationReport evaluate_localization(const Manifest& manifest,
                                         const SegmentationConfig& seg_cfg) {
    if (manifest.images.empty()) throw std::runtime_error("evaluate_localization: no images");

    LocalizationReport report;
    report.config = seg_cfg;
    for (const auto& rec : manifest.images) {
        const RgbImage img = read_image(resolve_image_path(manifest, rec));
        const auto detections = localize_cells(img, seg_cfg);

        std::vector<BoundingBox> gt_boxes;
        gt_boxes.reserve(rec.cells.size());
        for (const auto& cell : rec.cells) gt_boxes.push_back(cell.box);
        std::vector<BoundingBox> pred_boxes;
        pred_boxes.reserve(detections.size());
        for (const auto& det : detections) pred_boxes.push_back(det.box);

        const auto match = match_detections(gt_boxes, pred_boxes, report.iou_threshold);
        report.tp += match.tp;
        report.fp += match.fp;
        report.fn += match.fn;
        report.per_image.push_back({rec.image_id, match.tp, match.fp, match.fn});
    }
    report.metrics = precision_recall_f1(report.tp, report.fp, report.fn);
    return report;
}

std::string LocalizationReport::to_json() const {
    json j;
    j["format"] = "smearscope-eval-v1";
    j["task"] = "localization";
    j["config"] = json::parse(segmentation_config_to_json(config));
    j["iou_threshold"] = iou_threshold;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
    j["metrics"] = prf_to_json(metrics);
    json per = json::array();
    for (const auto& s : per_image)
        per.push_back({{"image_id", s.image_id}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}});
    j["per_image"] = std::move(per);
    return j.dump(2);
}

// ============================================================================
// Classification evaluation
// ============================================================================

std::vector<LabeledCell> extract_labeled_cells(const Manifest& manifest,
                                               const std::vector<std::string>& image_ids,
                                               double crop_margin) {
    std::vector<LabeledCell> out;
    for (const auto& rec : manifest.images) {
        if (!image_ids.empty() &&
            std::find(image_ids.begin(), image_ids.end(), rec.image_id) == image_ids.end())
            continue;
        const RgbImage img = read_image(resolve_image_path(manifest, rec));
        for (const auto& cell : rec.cells) {
            const CellCrop crop = extract_crop(img, cell.box, crop_margin, rec.image_id);
            out.push_back({extract_features(crop), cell.label});
        }
    }
    return out;
}

namespace {

// End-to-end variant: crops come from predicted boxes; a prediction matched
// to a ground-truth box inherits its label, unmatched predictions are
// dropped.
std::vector<LabeledCell> extract_predicted_cells(const Manifest& manifest,
                                                 const std::vector<std::string>& image_ids,
                                                 const SegmentationConfig& seg_cfg,
                                                 double margin) {
    std::vector<LabeledCell> out;
    for (const auto& rec : manifest.images) {
        if (std::find(image_ids.begin(), image_ids.end(), rec.image_id) == image_ids.end())
            continue;
        const RgbImage img = read_image(resolve_image_path(manifest, rec));
        const auto detections = localize_cells(img, seg_cfg);
        std::vector<BoundingBox> gt_boxes, pred_boxes;
        for (const auto& cell : rec.cells) gt_boxes.push_back(cell.box);
        for (const auto& det : detections) pred_boxes.push_back(det.box);
        for (const auto& m : match_detections(gt_boxes, pred_boxes).matches) {
            const CellCrop crop = extract_crop(img, pred_boxes[m.pred_index], margin,
                                               rec.image_id);
            out.push_back({extract_features(crop), rec.cells[m.gt_index].label});
        }
    }
    return out;
}

}  // namespace

ClassificationReport evaluate_classification(const Manifest& manifest,
                                             const ClassificationEvalConfig& cfg) {
    if (manifest.images.empty())
        throw std::runtime_error("evaluate_classification: no images");

    std::vector<std::string> ids;
    for (const auto& rec : manifest.images) ids.push_back(rec.image_id);
    const SplitAssignment split = split_dataset(ids, cfg.fractions, cfg.seed);

    const auto collect = [&](const std::vector<std::string>& subset) {
        return cfg.use_predicted_boxes
                   ? extract_predicted_cells(manifest, subset, cfg.segmentation,
                                             cfg.crop_margin)
                   : extract_labeled_cells(manifest, subset, cfg.crop_margin);
    };
    const std::vector<LabeledCell> train_cells = collect(split.train);
    const std::vector<LabeledCell> test_cells = collect(split.test);

    // Every stage must be present in the train split.
    std::array<std::int64_t, kNumStages> train_counts{};
    for (const auto& cell : train_cells) ++train_counts[static_cast<int>(cell.label)];
    for (int c = 0; c < kNumStages; ++c)
        if (train_counts[c] == 0)
            throw std::runtime_error("evaluate_classification: class missing from train split: " +
                                     stage_names()[c]);

    ClassificationReport report;
    report.kind = cfg.kind;
    report.split = split;
    report.train_cells = static_cast<std::int64_t>(train_cells.size());
    report.test_cells = static_cast<std::int64_t>(test_cells.size());
    report.model = train_model(cfg.kind, train_cells, cfg.train, cfg.seed + 2);

    std::vector<int> gt_labels, pred_labels;
    gt_labels.reserve(test_cells.size());
    pred_labels.reserve(test_cells.size());
    for (const auto& cell : test_cells) {
        gt_labels.push_back(static_cast<int>(cell.label));
        if (cfg.kind == ModelKind::Ssc)
            pred_labels.push_back(
                static_cast<int>(classify_ssc(report.model.ssc(), cell.features).label));
        else
            pred_labels.push_back(
                static_cast<int>(classify_tsc(report.model.tsc(), cell.features).label));
    }

    report.confusion = confusion_matrix(gt_labels, pred_labels, stage_names());
    report.macro_accuracy = macro_average_accuracy(report.confusion);
    report.macro_f1_value = macro_f1(report.confusion);
    for (int c = 0; c < kNumStages; ++c) {
        const std::int64_t tp = report.confusion.at(c, c);
        const std::int64_t fp = report.confusion.col_sum(c) - tp;
        const std::int64_t fn = report.confusion.row_sum(c) - tp;
        const auto prf = precision_recall_f1(tp, fp, fn);
        report.per_class.push_back(
            {stage_names()[c], prf.precision, prf.recall, prf.f1, report.confusion.row_sum(c)});
    }
    return report;
}

std::string ClassificationReport::to_json() const {
    json j;
    j["format"] = "smearscope-eval-v1";
    j["task"] = "classification";
    j["arch"] = kind == ModelKind::Ssc ? "ssc" : "tsc";
    j["seed"] = split.seed;
    j["split"] = {{"fractions", split.fractions},
                  {"train", split.train},
                  {"test", split.test},
                  {"val", split.val}};
    // Macro F1 here is the unweighted mean of per-class F1 scores.
    j["macro_average_accuracy"] = detail::round4(macro_accuracy.value);
    j["excluded_classes"] = macro_accuracy.excluded_classes;
    j["macro_f1"] = detail::round4(macro_f1_value);
    j["confusion_matrix"] = confusion_to_json(confusion);
    json per = json::array();
    for (const auto& s : per_class)
        per.push_back({{"name", s.name},
                       {"precision", detail::round4(s.precision)},
                       {"recall", detail::round4(s.recall)},
                       {"f1", detail::round4(s.f1)},
                       {"support", s.support}});
    j["per_class"] = std::move(per);
    j["train_cells"] = train_cells;
    j["test_cells"] = test_cells;
    j["model_hash"] = model_hash(model);
    return j.dump(2);
}

}  // namespace smearscope
