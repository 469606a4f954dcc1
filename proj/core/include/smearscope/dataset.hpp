#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "smearscope/classification.hpp"
#include "smearscope/image.hpp"

namespace smearscope {

struct CellAnnotation {
    BoundingBox box;
    StageLabel label = StageLabel::Healthy;
};

struct ImageRecord {
    std::string image_id;
    std::string path;  // relative to the manifest's directory unless absolute
    int width = 0;
    int height = 0;
    std::vector<CellAnnotation> cells;
};

struct ManifestMetadata {
    std::string source;
    std::string stain;
    std::string magnification;
};

struct Manifest {
    ManifestMetadata metadata;
    std::vector<ImageRecord> images;
    /// Directory the manifest was loaded from / written to; used to resolve
    /// relative image paths. Not serialized.
    std::string base_dir;
};

/// Absolute-or-joined path of an image record.
std::string resolve_image_path(const Manifest& manifest, const ImageRecord& record);

/// Parse and validate a manifest file. Invariant violations (duplicate
/// image_id, out-of-bounds box, unknown label) throw std::runtime_error
/// naming the image and cell index.
Manifest load_manifest(const std::string& path);
Manifest manifest_from_json(const std::string& json_text, const std::string& base_dir);
std::string manifest_to_json(const Manifest& manifest);
void save_manifest(const std::string& path, const Manifest& manifest);

// ============================================================================
// Synthetic smear generation
// ============================================================================

/// Everything the generator needs; fully determined by `seed`. Cell bodies
/// are axis-aligned ellipses; the per-class parasite archetypes are:
/// healthy = plain cell, ring = thin dark annulus, trophozoite = large
/// amoeboid dark blob, schizont = cluster of 6..12 small dark dots,
/// gametocyte = elongated dark blob spanning the cell.
struct SynthConfig {
    int image_width = 1600;
    int image_height = 1200;
    /// Cells per image, uniform in [min_cells, max_cells].
    int min_cells = 100;
    int max_cells = 122;
    /// Ellipse semi-axes, uniform integers in [min_radius, max_radius].
    int min_radius = 12;
    int max_radius = 22;
    /// healthy, ring, trophozoite, schizont, gametocyte; sums to 1.
    std::array<double, kNumStages> class_mix{0.8, 0.05, 0.05, 0.05, 0.05};
    /// Rejection-sampling cap on pairwise ground-truth box IoU.
    double overlap_fraction = 0.05;
    std::array<std::uint8_t, 3> background_color{245, 230, 235};
    std::array<std::uint8_t, 3> cell_color{230, 180, 190};
    std::array<std::uint8_t, 3> parasite_color{90, 60, 130};
    /// Std-dev of the additive luminance noise.
    double noise_std = 6.0;
    std::uint64_t seed = 1;

    void validate() const;
};

std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& json_text);

/// One synthetic smear with its ground truth. Pixel-identical for a fixed
/// config (placement is integer arithmetic; noise comes from the portable
/// generator in a fixed order). Throws std::runtime_error ("cannot place")
/// when a cell cannot be placed within 10,000 attempts.
std::pair<RgbImage, std::vector<CellAnnotation>> generate_smear(const SynthConfig& cfg);

/// Write n_images PNGs plus manifest.json into out_dir; image i uses seed
/// cfg.seed + i. Returns the manifest (also written to disk).
Manifest generate_corpus(const SynthConfig& cfg, int n_images, const std::string& out_dir);

}  // namespace smearscope
