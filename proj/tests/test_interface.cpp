#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "smearscope/analyze.hpp"
#include "smearscope/dataset.hpp"
#include "smearscope/evaluation.hpp"
#include "smearscope/image_io.hpp"
#include "smearscope/service.hpp"

using namespace smearscope;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// A trained TSC model plus matching corpora, built once for the suite.
struct Fixture {
    Model model;
    PipelineConfig cfg;
    RgbImage eval_image;                  // healthy + ring only
    std::vector<CellAnnotation> eval_cells;

    Fixture() {
        cfg.preprocess.skip_vignette = true;  // synthetic input has no vignette

        SynthConfig train_cfg;
        train_cfg.image_width = 800;
        train_cfg.image_height = 600;
        train_cfg.min_cells = 50;
        train_cfg.max_cells = 60;
        train_cfg.class_mix = {0.4, 0.15, 0.15, 0.15, 0.15};
        train_cfg.seed = 7100;
        const fs::path dir = fs::temp_directory_path() / "smearscope-iface-train";
        fs::remove_all(dir);
        const Manifest manifest = generate_corpus(train_cfg, 6, dir.string());
        const auto cells = extract_labeled_cells(manifest);
        model = train_model(ModelKind::Tsc, cells, TrainConfig{}, 99);
        fs::remove_all(dir);

        // Disjoint evaluation image: 50 cells, healthy and ring only.
        SynthConfig eval_cfg;
        eval_cfg.image_width = 900;
        eval_cfg.image_height = 700;
        eval_cfg.min_cells = 50;
        eval_cfg.max_cells = 50;
        eval_cfg.class_mix = {0.8, 0.2, 0.0, 0.0, 0.0};
        eval_cfg.seed = 7200;
        auto [img, cells2] = generate_smear(eval_cfg);
        eval_image = std::move(img);
        eval_cells = std::move(cells2);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

std::string canonical_without_timings(const std::string& result_json) {
    json j = json::parse(result_json);
    j.erase("timings");
    return j.dump();
}

}  // namespace

TEST_CASE("render_overlay: empty result leaves the image untouched") {
    RgbImage img(64, 48, 120, 130, 140);
    AnalysisResult result;
    CHECK(render_overlay(img, result) == img);
}

TEST_CASE("render_overlay: exactly the 2-px border pixels change") {
    RgbImage img(64, 64, 100, 100, 100);
    AnalysisResult result;
    result.cells.push_back({{10, 12, 20, 16}, StageLabel::Ring, {}, std::nullopt});
    const RgbImage out = render_overlay(img, result);

    std::int64_t changed = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool differs = std::memcmp(out.pixel(x, y), img.pixel(x, y), 3) != 0;
            if (differs) ++changed;
            const BoundingBox box{10, 12, 20, 16};
            const bool border = box.contains(x, y) &&
                                (x - box.x < 2 || box.right() - 1 - x < 2 ||
                                 y - box.y < 2 || box.bottom() - 1 - y < 2);
            CHECK(differs == border);
        }
    // 20x16 box minus 16x12 interior
    CHECK(changed == 20 * 16 - 16 * 12);

    CHECK(render_overlay(img, result) == out);  // deterministic
}

TEST_CASE("analyze_image: blank image has zero counts") {
    RgbImage blank(256, 256, 245, 230, 235);
    const auto result = analyze_image(blank, fixture().model, fixture().cfg, "blank");
    CHECK(result.total_cells == 0);
    CHECK(result.infected_cells == 0);
    CHECK(result.image_id == "blank");
}

TEST_CASE("analyze_image: infected count tracks the planted ring cells") {
    const auto& f = fixture();
    const auto result = analyze_image(f.eval_image, f.model, f.cfg, "eval");

    int planted_infected = 0;
    for (const auto& cell : f.eval_cells) planted_infected += is_infected(cell.label);

    CHECK(result.total_cells == static_cast<int>(f.eval_cells.size()));
    CHECK(std::abs(result.infected_cells - planted_infected) <= 2);

    // infected_cells is derived from the labels, never larger than total.
    int infected = 0;
    for (const auto& cell : result.cells) infected += is_infected(cell.label);
    CHECK(result.infected_cells == infected);
    CHECK(result.infected_cells <= result.total_cells);
}

TEST_CASE("analyze_image: deterministic modulo timings") {
    const auto& f = fixture();
    const auto a = analyze_image(f.eval_image, f.model, f.cfg, "x");
    const auto b = analyze_image(f.eval_image, f.model, f.cfg, "x");
    CHECK(canonical_without_timings(analysis_result_to_json(a)) ==
          canonical_without_timings(analysis_result_to_json(b)));
}

TEST_CASE("service: health, analyze equivalence, overlay, and errors") {
    const auto& f = fixture();
    InferenceService service(f.model, f.cfg);
    const int port = service.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60, 0);

    SUBCASE("GET /health reports ok and the model hash") {
        const auto res = client.Get("/health");
        REQUIRE(res);
        CHECK(res->status == 200);
        const json j = json::parse(res->body);
        CHECK(j.at("status") == "ok");
        CHECK(j.at("model_hash") == model_hash(f.model));
    }

    SUBCASE("POST /analyze equals the library result modulo timings") {
        const auto png = encode_png(f.eval_image);
        const auto res = client.Post("/analyze?image_id=eval",
                                     reinterpret_cast<const char*>(png.data()), png.size(),
                                     "image/png");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const auto expected = analyze_image(f.eval_image, f.model, f.cfg, "eval");
        CHECK(canonical_without_timings(res->body) ==
              canonical_without_timings(analysis_result_to_json(expected)));
    }

    SUBCASE("POST /analyze with non-image bytes fails with decode_failed") {
        const auto res = client.Post("/analyze", "these are not pixels", "image/png");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(json::parse(res->body).at("error") == "decode_failed");
    }

    SUBCASE("overlay=1 embeds a decodable PNG overlay") {
        const auto png = encode_png(f.eval_image);
        const auto res = client.Post("/analyze?overlay=1",
                                     reinterpret_cast<const char*>(png.data()), png.size(),
                                     "image/png");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const json j = json::parse(res->body);
        REQUIRE(j.contains("overlay_png_base64"));
        // Base64 alphabet only.
        const std::string& b64 = j["overlay_png_base64"].get_ref<const std::string&>();
        CHECK(b64.find_first_not_of(
                  "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/=") ==
              std::string::npos);
    }

    SUBCASE("concurrent identical requests return identical bodies") {
        const auto png = encode_png(f.eval_image);
        std::vector<std::string> bodies(4);
        std::vector<std::thread> workers;
        for (auto& body : bodies)
            workers.emplace_back([&, target = &body] {
                httplib::Client c("127.0.0.1", port);
                c.set_read_timeout(60, 0);
                const auto res = c.Post("/analyze",
                                        reinterpret_cast<const char*>(png.data()), png.size(),
                                        "image/png");
                if (res && res->status == 200) *target = res->body;
            });
        for (auto& w : workers) w.join();
        for (const auto& body : bodies) {
            REQUIRE_FALSE(body.empty());
            CHECK(canonical_without_timings(body) == canonical_without_timings(bodies[0]));
        }
    }

    service.stop();
}
