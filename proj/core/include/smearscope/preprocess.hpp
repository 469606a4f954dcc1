#pragma once

#include <cstdint>

#include "smearscope/image.hpp"

namespace smearscope {

struct PreprocessConfig {
    /// Microscope-camera input has no eyepiece vignette; both crops become
    /// the identity.
    bool skip_vignette = false;
    /// Gray level below which a pixel counts as "dark" for the ratio crop.
    std::uint8_t dark_cutoff = 40;
    /// Rows/columns whose dark fraction exceeds this are trimmed.
    double ratio_cutoff = 0.5;
};

/// What the two crop steps did, in original-image coordinates.
struct CropReport {
    int original_width = 0;
    int original_height = 0;
    BoundingBox contour_crop_rect;
    BoundingBox ratio_crop_rect;  // final crop; always inside contour_crop_rect
    std::uint8_t dark_intensity_cutoff = 0;
    double dark_ratio_cutoff = 0.0;
};

/// First vignette-removal step: equalize, threshold with global Otsu
/// (foreground = bright field), and crop to the bounding box of the
/// largest-area foreground component.
///
/// Throws std::invalid_argument on images smaller than 32x32 and
/// std::runtime_error ("no bright field found") when nothing survives the
/// threshold.
std::pair<RgbImage, BoundingBox> crop_largest_contour(const RgbImage& img);

/// Second step: trim edge rows/columns whose dark-pixel fraction exceeds
/// ratio_cutoff, scanning inward from each edge and stopping at the first
/// surviving row/column. Only edges are trimmed; a dark interior band is
/// content.
///
/// Throws std::runtime_error ("no content rows survive") when every row or
/// every column is trimmed.
std::pair<RgbImage, BoundingBox> crop_by_dark_ratio(const RgbImage& img,
                                                    std::uint8_t dark_cutoff,
                                                    double ratio_cutoff);

/// Full field-of-view preprocessing: contour crop, then dark-ratio crop,
/// with both rectangles recorded in original-image coordinates.
std::pair<RgbImage, CropReport> preprocess_field(const RgbImage& img,
                                                 const PreprocessConfig& cfg = {});

}  // namespace smearscope
