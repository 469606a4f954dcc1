#include "smearscope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smearscope/image_io.hpp"
#include "smearscope/rng.hpp"

namespace smearscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "smearscope-manifest-v1";

}  // namespace

std::string resolve_image_path(const Manifest& manifest, const ImageRecord& record) {
    const fs::path p(record.path);
    if (p.is_absolute() || manifest.base_dir.empty()) return record.path;
    return (fs::path(manifest.base_dir) / p).string();
}

Manifest manifest_from_json(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("manifest: malformed JSON: ") + e.what());
    }
    if (j.value("format", "") != kManifestFormat)
        throw std::runtime_error("manifest: unknown format (expected " +
                                 std::string(kManifestFormat) + ")");

    Manifest m;
    m.base_dir = base_dir;
    if (j.contains("metadata")) {
        const auto& md = j["metadata"];
        m.metadata.source = md.value("source", "");
        m.metadata.stain = md.value("stain", "");
        m.metadata.magnification = md.value("magnification", "");
    }

    std::vector<std::string> seen_ids;
    for (const auto& ji : j.at("images")) {
        ImageRecord rec;
        rec.image_id = ji.at("image_id").get<std::string>();
        rec.path = ji.at("path").get<std::string>();
        rec.width = ji.at("width").get<int>();
        rec.height = ji.at("height").get<int>();
        if (rec.width < 1 || rec.height < 1)
            throw std::runtime_error("manifest: image " + rec.image_id + ": bad dimensions");
        if (std::find(seen_ids.begin(), seen_ids.end(), rec.image_id) != seen_ids.end())
            throw std::runtime_error("manifest: duplicate image_id: " + rec.image_id);
        seen_ids.push_back(rec.image_id);

        const BoundingBox bounds{0, 0, rec.width, rec.height};
        std::size_t cell_index = 0;
        for (const auto& jc : ji.value("cells", json::array())) {
            CellAnnotation cell;
            cell.box = {jc.at("x").get<int>(), jc.at("y").get<int>(), jc.at("w").get<int>(),
                        jc.at("h").get<int>()};
            if (cell.box.w < 1 || cell.box.h < 1 || !bounds.contains(cell.box))
                throw std::runtime_error("manifest: image " + rec.image_id + ", cell " +
                                         std::to_string(cell_index) + ": box outside image");
            try {
                cell.label = stage_from_string(jc.at("label").get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error("manifest: image " + rec.image_id + ", cell " +
                                         std::to_string(cell_index) + ": " + e.what());
            }
            rec.cells.push_back(cell);
            ++cell_index;
        }
        m.images.push_back(std::move(rec));
    }
    return m;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return manifest_from_json(buf.str(), fs::path(path).parent_path().string());
}

std::string manifest_to_json(const Manifest& manifest) {
    json j;
    j["format"] = kManifestFormat;
    j["metadata"] = {{"source", manifest.metadata.source},
                     {"stain", manifest.metadata.stain},
                     {"magnification", manifest.metadata.magnification}};
    json images = json::array();
    for (const auto& rec : manifest.images) {
        json ji;
        ji["image_id"] = rec.image_id;
        ji["path"] = rec.path;
        ji["width"] = rec.width;
        ji["height"] = rec.height;
        json cells = json::array();
        for (const auto& cell : rec.cells)
            cells.push_back({{"x", cell.box.x},
                             {"y", cell.box.y},
                             {"w", cell.box.w},
                             {"h", cell.box.h},
                             {"label", stage_name(cell.label)}});
        ji["cells"] = std::move(cells);
        images.push_back(std::move(ji));
    }
    j["images"] = std::move(images);
    return j.dump(2);
}

void save_manifest(const std::string& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << manifest_to_json(manifest) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ============================================================================
// Synthetic generation
// ============================================================================

void SynthConfig::validate() const {
    if (image_width < 64 || image_height < 64)
        throw std::invalid_argument("SynthConfig: image too small");
    if (min_cells < 0 || max_cells < min_cells)
        throw std::invalid_argument("SynthConfig: bad cell count range");
    if (min_radius < 3 || max_radius < min_radius)
        throw std::invalid_argument("SynthConfig: bad radius range");
    double mix_sum = 0.0;
    for (double f : class_mix) {
        if (f < 0.0) throw std::invalid_argument("SynthConfig: negative class fraction");
        mix_sum += f;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9)
        throw std::invalid_argument("SynthConfig: class_mix must sum to 1");
    if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
        throw std::invalid_argument("SynthConfig: overlap_fraction must be in [0,1)");
    if (noise_std < 0.0) throw std::invalid_argument("SynthConfig: negative noise_std");
}

std::string synth_config_to_json(const SynthConfig& cfg) {
    json j;
    j["image_width"] = cfg.image_width;
    j["image_height"] = cfg.image_height;
    j["min_cells"] = cfg.min_cells;
    j["max_cells"] = cfg.max_cells;
    j["min_radius"] = cfg.min_radius;
    j["max_radius"] = cfg.max_radius;
    j["class_mix"] = cfg.class_mix;
    j["overlap_fraction"] = cfg.overlap_fraction;
    j["background_color"] = cfg.background_color;
    j["cell_color"] = cfg.cell_color;
    j["parasite_color"] = cfg.parasite_color;
    j["noise_std"] = cfg.noise_std;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("synth config: malformed JSON: ") + e.what());
    }
    SynthConfig cfg;
    cfg.image_width = j.value("image_width", cfg.image_width);
    cfg.image_height = j.value("image_height", cfg.image_height);
    cfg.min_cells = j.value("min_cells", cfg.min_cells);
    cfg.max_cells = j.value("max_cells", cfg.max_cells);
    cfg.min_radius = j.value("min_radius", cfg.min_radius);
    cfg.max_radius = j.value("max_radius", cfg.max_radius);
    if (j.contains("class_mix")) cfg.class_mix = j["class_mix"].get<std::array<double, 5>>();
    cfg.overlap_fraction = j.value("overlap_fraction", cfg.overlap_fraction);
    if (j.contains("background_color"))
        cfg.background_color = j["background_color"].get<std::array<std::uint8_t, 3>>();
    if (j.contains("cell_color"))
        cfg.cell_color = j["cell_color"].get<std::array<std::uint8_t, 3>>();
    if (j.contains("parasite_color"))
        cfg.parasite_color = j["parasite_color"].get<std::array<std::uint8_t, 3>>();
    cfg.noise_std = j.value("noise_std", cfg.noise_std);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

namespace {

double box_iou(const BoundingBox& a, const BoundingBox& b) {
    const int ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const int iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const std::int64_t inter = static_cast<std::int64_t>(ix) * iy;
    if (inter == 0) return 0.0;
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Integer ellipse membership: (dx*ry)^2 + (dy*rx)^2 <= (rx*ry)^2.
inline bool in_ellipse(std::int64_t dx, std::int64_t dy, std::int64_t rx, std::int64_t ry) {
    const std::int64_t a = dx * ry;
    const std::int64_t b = dy * rx;
    const std::int64_t r = rx * ry;
    return a * a + b * b <= r * r;
}

inline std::uint8_t jitter_channel(std::uint8_t base, int delta) {
    return static_cast<std::uint8_t>(std::clamp(static_cast<int>(base) + delta, 0, 255));
}

struct CellSprite {
    BoundingBox box;
    StageLabel label;
    int cx, cy, rx, ry;
    std::array<std::uint8_t, 3> body_color;
    std::array<std::uint8_t, 3> stain_color;
    // Parasite geometry, all relative to the cell center.
    struct Blob {
        int dx, dy, rx, ry;
    };
    std::vector<Blob> blobs;      // filled dark ellipses
    int ring_outer = 0;           // annulus radii (ring archetype)
    int ring_inner = 0;
    int ring_dx = 0, ring_dy = 0;
};

void fill_ellipse(RgbImage& img, int cx, int cy, int rx, int ry,
                  const std::array<std::uint8_t, 3>& color) {
    const int x0 = std::max(0, cx - rx);
    const int x1 = std::min(img.width - 1, cx + rx);
    const int y0 = std::max(0, cy - ry);
    const int y1 = std::min(img.height - 1, cy + ry);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (in_ellipse(x - cx, y - cy, rx, ry))
                img.set_pixel(x, y, color[0], color[1], color[2]);
}

void fill_annulus(RgbImage& img, int cx, int cy, int router, int rinner,
                  const std::array<std::uint8_t, 3>& color) {
    const int x0 = std::max(0, cx - router);
    const int x1 = std::min(img.width - 1, cx + router);
    const int y0 = std::max(0, cy - router);
    const int y1 = std::min(img.height - 1, cy + router);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const std::int64_t d2 = static_cast<std::int64_t>(x - cx) * (x - cx) +
                                    static_cast<std::int64_t>(y - cy) * (y - cy);
            if (d2 <= static_cast<std::int64_t>(router) * router &&
                d2 > static_cast<std::int64_t>(rinner) * rinner)
                img.set_pixel(x, y, color[0], color[1], color[2]);
        }
}

StageLabel sample_stage(Rng& rng, const std::array<double, kNumStages>& mix) {
    const double u = rng.next_double();
    double acc = 0.0;
    for (int c = 0; c < kNumStages; ++c) {
        acc += mix[c];
        if (u < acc) return static_cast<StageLabel>(c);
    }
    return StageLabel::Gametocyte;
}

}  // namespace

std::pair<RgbImage, std::vector<CellAnnotation>> generate_smear(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    const int n_cells = static_cast<int>(rng.next_int(cfg.min_cells, cfg.max_cells));

    std::vector<CellSprite> sprites;
    std::vector<CellAnnotation> annotations;
    for (int i = 0; i < n_cells; ++i) {
        const StageLabel label = sample_stage(rng, cfg.class_mix);

        CellSprite sp;
        sp.label = label;
        bool placed = false;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            sp.rx = static_cast<int>(rng.next_int(cfg.min_radius, cfg.max_radius));
            sp.ry = static_cast<int>(rng.next_int(cfg.min_radius, cfg.max_radius));
            sp.cx = static_cast<int>(rng.next_int(sp.rx, cfg.image_width - 1 - sp.rx));
            sp.cy = static_cast<int>(rng.next_int(sp.ry, cfg.image_height - 1 - sp.ry));
            sp.box = {sp.cx - sp.rx, sp.cy - sp.ry, 2 * sp.rx + 1, 2 * sp.ry + 1};
            bool ok = true;
            for (const auto& other : sprites)
                if (box_iou(sp.box, other.box) > cfg.overlap_fraction) {
                    ok = false;
                    break;
                }
            if (ok) {
                placed = true;
                break;
            }
        }
        if (!placed) throw std::runtime_error("generate_smear: cannot place");

        for (int c = 0; c < 3; ++c) {
            sp.body_color[c] =
                jitter_channel(cfg.cell_color[c], static_cast<int>(rng.next_int(-12, 12)));
            sp.stain_color[c] =
                jitter_channel(cfg.parasite_color[c], static_cast<int>(rng.next_int(-15, 15)));
        }

        const int rmin = std::min(sp.rx, sp.ry);
        switch (label) {
            case StageLabel::Healthy:
                break;
            case StageLabel::Ring: {
                // Thin dark annulus, slightly off-center.
                sp.ring_outer = std::max(3, rmin * 6 / 10);
                sp.ring_inner = std::max(1, sp.ring_outer - 2);
                const int wiggle = std::max(1, rmin / 5);
                sp.ring_dx = static_cast<int>(rng.next_int(-wiggle, wiggle));
                sp.ring_dy = static_cast<int>(rng.next_int(-wiggle, wiggle));
                break;
            }
            case StageLabel::Trophozoite: {
                // Amoeboid: a big blob plus two satellite blobs.
                const int r0 = std::max(2, rmin * 5 / 10);
                sp.blobs.push_back({0, 0, r0, r0});
                for (int k = 0; k < 2; ++k) {
                    const int rr = std::max(2, rmin * 3 / 10);
                    const int off = std::max(1, r0 * 2 / 3);
                    sp.blobs.push_back({static_cast<int>(rng.next_int(-off, off)),
                                        static_cast<int>(rng.next_int(-off, off)), rr, rr});
                }
                break;
            }
            case StageLabel::Schizont: {
                // 6..12 scattered dots (merozoite nuclei).
                const int dots = static_cast<int>(rng.next_int(6, 12));
                const int spread = std::max(2, rmin * 6 / 10);
                for (int k = 0; k < dots; ++k)
                    sp.blobs.push_back({static_cast<int>(rng.next_int(-spread, spread)),
                                        static_cast<int>(rng.next_int(-spread, spread)), 2, 2});
                break;
            }
            case StageLabel::Gametocyte: {
                // Elongated blob spanning the cell along its longer axis.
                if (sp.rx >= sp.ry)
                    sp.blobs.push_back({0, 0, std::max(2, sp.rx * 8 / 10),
                                        std::max(2, sp.ry * 3 / 10)});
                else
                    sp.blobs.push_back({0, 0, std::max(2, sp.rx * 3 / 10),
                                        std::max(2, sp.ry * 8 / 10)});
                break;
            }
        }

        sprites.push_back(sp);
        annotations.push_back({sp.box, label});
    }

    RgbImage img(cfg.image_width, cfg.image_height, cfg.background_color[0],
                 cfg.background_color[1], cfg.background_color[2]);
    for (const auto& sp : sprites) {
        fill_ellipse(img, sp.cx, sp.cy, sp.rx, sp.ry, sp.body_color);
        if (sp.label == StageLabel::Ring)
            fill_annulus(img, sp.cx + sp.ring_dx, sp.cy + sp.ring_dy, sp.ring_outer,
                         sp.ring_inner, sp.stain_color);
        for (const auto& blob : sp.blobs)
            fill_ellipse(img, sp.cx + blob.dx, sp.cy + blob.dy, blob.rx, blob.ry,
                         sp.stain_color);
    }

    // Additive luminance noise, one draw per pixel in raster order.
    if (cfg.noise_std > 0.0) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int delta =
                    static_cast<int>(std::lround(cfg.noise_std * rng.next_gaussian()));
                std::uint8_t* p = img.pixel(x, y);
                for (int c = 0; c < 3; ++c)
                    p[c] = static_cast<std::uint8_t>(
                        std::clamp(static_cast<int>(p[c]) + delta, 0, 255));
            }
    }

    return {std::move(img), std::move(annotations)};
}

Manifest generate_corpus(const SynthConfig& cfg, int n_images, const std::string& out_dir) {
    cfg.validate();
    if (n_images < 1) throw std::invalid_argument("generate_corpus: n_images must be >= 1");
    fs::create_directories(out_dir);

    Manifest manifest;
    manifest.base_dir = out_dir;
    manifest.metadata = {"smearscope-synth", "synthetic-giemsa", "100x"};

    for (int i = 0; i < n_images; ++i) {
        SynthConfig per_image = cfg;
        per_image.seed = cfg.seed + static_cast<std::uint64_t>(i);
        auto [img, cells] = generate_smear(per_image);

        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);
        ImageRecord rec;
        rec.image_id = id;
        rec.path = std::string(id) + ".png";
        rec.width = img.width;
        rec.height = img.height;
        rec.cells = std::move(cells);
        write_png((fs::path(out_dir) / rec.path).string(), img);
        manifest.images.push_back(std::move(rec));
    }

    save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

}  // namespace smearscope
