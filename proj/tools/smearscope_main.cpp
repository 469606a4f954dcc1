// smearscope CLI: preprocess, segment, train, infer, evaluate, synth, serve.
//
// Exit codes: 0 success, 1 usage error, 2 processing error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smearscope/analyze.hpp"
#include "smearscope/dataset.hpp"
#include "smearscope/evaluation.hpp"
#include "smearscope/image_io.hpp"
#include "smearscope/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smearscope;

namespace {

struct SegFlags {
    SegmentationConfig cfg;
    int open_radius = 2;
    int erode_radius = 1;

    void attach(CLI::App* app) {
        app->add_option("--grid-rows", cfg.grid_rows, "Tiled-Otsu grid rows");
        app->add_option("--grid-cols", cfg.grid_cols, "Tiled-Otsu grid columns");
        app->add_option("--open-radius", open_radius, "Opening disk radius");
        app->add_option("--erode-radius", erode_radius, "Erosion disk radius");
        app->add_option("--erode-iters", cfg.erode_iters, "Erosion iterations");
        app->add_option("--marker-fraction", cfg.marker_fraction,
                        "Watershed marker threshold as a fraction of the per-component "
                        "distance maximum");
        app->add_option("--min-area-fraction", cfg.min_area_fraction,
                        "Drop labels smaller than this fraction of the median label area");
    }

    SegmentationConfig resolve() const {
        SegmentationConfig out = cfg;
        out.open_se = {SEShape::Disk, open_radius};
        out.erode_se = {SEShape::Disk, erode_radius};
        out.validate();
        return out;
    }
};

struct PreprocessFlags {
    PreprocessConfig cfg;
    int dark_cutoff = 40;

    void attach(CLI::App* app) {
        app->add_option("--dark-cutoff", dark_cutoff, "Gray level below which a pixel is dark")
            ->check(CLI::Range(0, 255));
        app->add_option("--ratio-cutoff", cfg.ratio_cutoff,
                        "Trim edge rows/columns whose dark fraction exceeds this");
        app->add_flag("--skip-vignette", cfg.skip_vignette,
                      "Input has no eyepiece vignette; skip both crops");
    }

    PreprocessConfig resolve() const {
        PreprocessConfig out = cfg;
        out.dark_cutoff = static_cast<std::uint8_t>(dark_cutoff);
        return out;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string default_model_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SMEARSCOPE_MODEL")) return env;
    throw std::runtime_error("no model given (use --model or set SMEARSCOPE_MODEL)");
}

std::string detections_to_json(const std::string& image_id,
                               const std::vector<CellDetection>& detections) {
    json j;
    j["image"] = image_id;
    json arr = json::array();
    for (const auto& det : detections)
        arr.push_back({{"x", det.box.x},
                       {"y", det.box.y},
                       {"w", det.box.w},
                       {"h", det.box.h},
                       {"area", det.area}});
    j["detections"] = std::move(arr);
    return j.dump(2);
}

/// Overlay for unlabeled detections: every box rendered in the healthy
/// (green) style.
RgbImage detections_overlay(const RgbImage& img, const std::vector<CellDetection>& detections) {
    AnalysisResult pseudo;
    for (const auto& det : detections)
        pseudo.cells.push_back({det.box, StageLabel::Healthy, {}, std::nullopt});
    return render_overlay(img, pseudo);
}

int run(int argc, char** argv) {
    CLI::App app{"Blood-smear microscopy analysis toolkit"};
    app.require_subcommand(1);

    // preprocess ------------------------------------------------------------
    auto* cmd_pre = app.add_subcommand("preprocess", "Remove the eyepiece vignette");
    std::string pre_in, pre_out;
    PreprocessFlags pre_flags;
    cmd_pre->add_option("--in", pre_in, "Input image (PNG/JPEG)")->required();
    cmd_pre->add_option("--out", pre_out, "Output PNG")->required();
    pre_flags.attach(cmd_pre);
    cmd_pre->callback([&] {
        const RgbImage img = read_image(pre_in);
        auto [out, report] = preprocess_field(img, pre_flags.resolve());
        write_png(pre_out, out);
        json j;
        j["original_size"] = {{"w", report.original_width}, {"h", report.original_height}};
        j["contour_crop_rect"] = {{"x", report.contour_crop_rect.x},
                                  {"y", report.contour_crop_rect.y},
                                  {"w", report.contour_crop_rect.w},
                                  {"h", report.contour_crop_rect.h}};
        j["ratio_crop_rect"] = {{"x", report.ratio_crop_rect.x},
                                {"y", report.ratio_crop_rect.y},
                                {"w", report.ratio_crop_rect.w},
                                {"h", report.ratio_crop_rect.h}};
        j["dark_intensity_cutoff"] = report.dark_intensity_cutoff;
        j["dark_ratio_cutoff"] = report.dark_ratio_cutoff;
        const fs::path report_path = fs::path(pre_out).replace_extension(".crop.json");
        write_text(report_path.string(), j.dump(2));
        std::cout << "wrote " << pre_out << " and " << report_path.string() << "\n";
    });

    // segment ---------------------------------------------------------------
    auto* cmd_seg = app.add_subcommand("segment", "Localize cells as bounding boxes");
    std::string seg_in, seg_out_json, seg_out_overlay;
    SegFlags seg_flags;
    cmd_seg->add_option("--in", seg_in, "Input image (PNG/JPEG)")->required();
    cmd_seg->add_option("--out-json", seg_out_json, "Detections JSON")->required();
    cmd_seg->add_option("--out-overlay", seg_out_overlay, "Optional overlay PNG");
    seg_flags.attach(cmd_seg);
    cmd_seg->callback([&] {
        const RgbImage img = read_image(seg_in);
        const auto detections = localize_cells(img, seg_flags.resolve());
        write_text(seg_out_json,
                   detections_to_json(fs::path(seg_in).stem().string(), detections));
        if (!seg_out_overlay.empty())
            write_png(seg_out_overlay, detections_overlay(img, detections));
        std::cout << detections.size() << " detections -> " << seg_out_json << "\n";
    });

    // train -----------------------------------------------------------------
    auto* cmd_train = app.add_subcommand("train", "Train an SSC or TSC model from a manifest");
    std::string train_manifest, train_arch = "tsc", train_out;
    TrainConfig train_cfg;
    double train_margin = 0.10;
    cmd_train->add_option("--manifest", train_manifest, "Dataset manifest JSON")->required();
    cmd_train->add_option("--arch", train_arch, "Architecture: ssc or tsc")
        ->check(CLI::IsMember({"ssc", "tsc"}));
    cmd_train->add_option("--seed", train_cfg.seed, "Training seed");
    cmd_train->add_option("--out", train_out, "Output model JSON")->required();
    cmd_train->add_option("--lr", train_cfg.learning_rate, "Learning rate");
    cmd_train->add_option("--epochs", train_cfg.epochs, "Full-batch epochs");
    cmd_train->add_option("--l2", train_cfg.l2, "L2 penalty on weights");
    cmd_train->add_option("--crop-margin", train_margin, "Crop margin per side");
    cmd_train->callback([&] {
        const Manifest manifest = load_manifest(train_manifest);
        const auto cells = extract_labeled_cells(manifest, {}, train_margin);
        const ModelKind kind = train_arch == "ssc" ? ModelKind::Ssc : ModelKind::Tsc;
        const Model model = train_model(kind, cells, train_cfg, train_cfg.seed + 2);
        save_model(train_out, model);
        std::cout << "trained " << train_arch << " on " << cells.size() << " cells -> "
                  << train_out << " (hash " << model_hash(model) << ")\n";
    });

    // infer -----------------------------------------------------------------
    auto* cmd_infer = app.add_subcommand("infer", "Analyze one image with a trained model");
    std::string infer_model, infer_in, infer_out_json, infer_out_overlay, infer_image_id;
    SegFlags infer_seg;
    PreprocessFlags infer_pre;
    double infer_margin = 0.10;
    cmd_infer->add_option("--model", infer_model, "Model JSON (default: $SMEARSCOPE_MODEL)");
    cmd_infer->add_option("--in", infer_in, "Input image (PNG/JPEG)")->required();
    cmd_infer->add_option("--out-json", infer_out_json, "AnalysisResult JSON")->required();
    cmd_infer->add_option("--out-overlay", infer_out_overlay, "Optional overlay PNG");
    cmd_infer->add_option("--image-id", infer_image_id,
                          "Result image_id (default: input file stem)");
    cmd_infer->add_option("--crop-margin", infer_margin, "Crop margin per side");
    infer_seg.attach(cmd_infer);
    infer_pre.attach(cmd_infer);
    cmd_infer->callback([&] {
        const Model model = load_model(default_model_path(infer_model));
        const RgbImage img = read_image(infer_in);
        PipelineConfig cfg;
        cfg.preprocess = infer_pre.resolve();
        cfg.segmentation = infer_seg.resolve();
        cfg.crop_margin = infer_margin;
        const std::string image_id =
            infer_image_id.empty() ? fs::path(infer_in).stem().string() : infer_image_id;
        const AnalysisResult result = analyze_image(img, model, cfg, image_id);
        write_text(infer_out_json, analysis_result_to_json(result));
        if (!infer_out_overlay.empty())
            write_png(infer_out_overlay, render_overlay(img, result));
        std::cout << result.total_cells << " cells, " << result.infected_cells
                  << " infected -> " << infer_out_json << "\n";
    });

    // evaluate ----------------------------------------------------------
    auto* cmd_eval = app.add_subcommand("evaluate", "Run the evaluation protocols");
    cmd_eval->require_subcommand(1);

    auto* cmd_eval_loc = cmd_eval->add_subcommand("localization", "IoU@0.5 detection metrics");
    std::string eval_loc_manifest, eval_loc_out;
    SegFlags eval_loc_seg;
    cmd_eval_loc->add_option("--manifest", eval_loc_manifest, "Dataset manifest JSON")
        ->required();
    cmd_eval_loc->add_option("--out", eval_loc_out, "Report JSON")->required();
    eval_loc_seg.attach(cmd_eval_loc);
    cmd_eval_loc->callback([&] {
        const Manifest manifest = load_manifest(eval_loc_manifest);
        const auto report = evaluate_localization(manifest, eval_loc_seg.resolve());
        write_text(eval_loc_out, report.to_json());
        std::cout << "P=" << report.metrics.precision << " R=" << report.metrics.recall
                  << " F1=" << report.metrics.f1 << " -> " << eval_loc_out << "\n";
    });

    auto* cmd_eval_cls =
        cmd_eval->add_subcommand("classification", "Split, train, and score stage labels");
    std::string eval_cls_manifest, eval_cls_out, eval_cls_arch = "tsc";
    ClassificationEvalConfig eval_cls_cfg;
    SegFlags eval_cls_seg;
    cmd_eval_cls->add_option("--manifest", eval_cls_manifest, "Dataset manifest JSON")
        ->required();
    cmd_eval_cls->add_option("--out", eval_cls_out, "Report JSON")->required();
    cmd_eval_cls->add_option("--arch", eval_cls_arch, "Architecture: ssc or tsc")
        ->check(CLI::IsMember({"ssc", "tsc"}));
    cmd_eval_cls->add_option("--seed", eval_cls_cfg.seed, "Split/training seed");
    cmd_eval_cls->add_option("--lr", eval_cls_cfg.train.learning_rate, "Learning rate");
    cmd_eval_cls->add_option("--epochs", eval_cls_cfg.train.epochs, "Full-batch epochs");
    cmd_eval_cls->add_option("--l2", eval_cls_cfg.train.l2, "L2 penalty on weights");
    cmd_eval_cls->add_flag("--use-predicted-boxes", eval_cls_cfg.use_predicted_boxes,
                           "Crop from matched predicted boxes instead of ground truth");
    eval_cls_seg.attach(cmd_eval_cls);
    cmd_eval_cls->callback([&] {
        const Manifest manifest = load_manifest(eval_cls_manifest);
        eval_cls_cfg.kind = eval_cls_arch == "ssc" ? ModelKind::Ssc : ModelKind::Tsc;
        eval_cls_cfg.train.seed = eval_cls_cfg.seed;
        eval_cls_cfg.segmentation = eval_cls_seg.resolve();
        const auto report = evaluate_classification(manifest, eval_cls_cfg);
        write_text(eval_cls_out, report.to_json());
        std::cout << "macro accuracy " << report.macro_accuracy.value << ", macro F1 "
                  << report.macro_f1_value << " -> " << eval_cls_out << "\n";
    });

    // synth -------------------------------------------------------------
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic smear corpus");
    std::string synth_config, synth_out;
    int synth_n = 1;
    std::uint64_t synth_seed = 0;
    bool synth_seed_set = false;
    cmd_synth->add_option("--config", synth_config, "SynthConfig JSON (defaults when omitted)");
    cmd_synth->add_option("--n", synth_n, "Number of images")->required();
    cmd_synth->add_option("--out", synth_out, "Output directory")->required();
    cmd_synth->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
            synth_seed = v;
            synth_seed_set = true;
        },
        "Base seed (overrides the config file)");
    cmd_synth->callback([&] {
        SynthConfig cfg;
        if (!synth_config.empty()) {
            std::ifstream in(synth_config);
            if (!in) throw std::runtime_error("cannot open config: " + synth_config);
            std::stringstream buf;
            buf << in.rdbuf();
            cfg = synth_config_from_json(buf.str());
        }
        if (synth_seed_set) cfg.seed = synth_seed;
        const Manifest manifest = generate_corpus(cfg, synth_n, synth_out);
        std::int64_t cells = 0;
        for (const auto& rec : manifest.images)
            cells += static_cast<std::int64_t>(rec.cells.size());
        std::cout << "wrote " << manifest.images.size() << " images (" << cells
                  << " cells) to " << synth_out << "\n";
    });

    // serve -------------------------------------------------------------
    auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP inference service");
    std::string serve_model, serve_host = "0.0.0.0";
    int serve_port = 8080;
    SegFlags serve_seg;
    PreprocessFlags serve_pre;
    double serve_margin = 0.10;
    cmd_serve->add_option("--model", serve_model, "Model JSON (default: $SMEARSCOPE_MODEL)");
    cmd_serve->add_option("--host", serve_host, "Bind address");
    cmd_serve->add_option("--port", serve_port, "Port");
    cmd_serve->add_option("--crop-margin", serve_margin, "Crop margin per side");
    serve_seg.attach(cmd_serve);
    serve_pre.attach(cmd_serve);
    cmd_serve->callback([&] {
        const Model model = load_model(default_model_path(serve_model));
        PipelineConfig cfg;
        cfg.preprocess = serve_pre.resolve();
        cfg.segmentation = serve_seg.resolve();
        cfg.crop_margin = serve_margin;
        InferenceService service(model, cfg);
        std::cout << "serving on " << serve_host << ":" << serve_port << " (model hash "
                  << model_hash(model) << ")\n";
        service.run(serve_host, serve_port);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // processing error
    }
}
