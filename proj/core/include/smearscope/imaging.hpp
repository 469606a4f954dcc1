#pragma once

#include "smearscope/image.hpp"

namespace smearscope {

// ============================================================================
// Intensity transforms and thresholding
// ============================================================================

/// ITU-R 601 luma conversion: round(0.299 R + 0.587 G + 0.114 B).
GrayImage to_grayscale(const RgbImage& img);

/// Global histogram equalization,
///   out(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min)),
/// a monotone non-decreasing remapping. A constant image is returned
/// unchanged (the mapping is degenerate); *degenerate is set accordingly
/// when provided.
GrayImage equalize_histogram(const GrayImage& img, bool* degenerate = nullptr);

struct OtsuResult {
    std::uint8_t threshold = 0;
    /// Between-class variance at the chosen threshold, with normalized class
    /// weights (units: intensity squared).
    double variance = 0.0;
    /// True when the image is constant; threshold is then that constant.
    bool degenerate = false;
};

/// Otsu's method: the smallest t maximizing w0(t) * w1(t) * (mu0 - mu1)^2,
/// where class 0 is {pixels <= t} and class 1 is {pixels > t}.
OtsuResult otsu_threshold(const GrayImage& img);

enum class Polarity { Above, Below };

/// Foreground = pixels strictly above (or strictly below) the threshold.
BinaryMask binarize(const GrayImage& img, std::uint8_t threshold, Polarity polarity);

/// Per-tile Otsu binarization for unevenly lit fields. The image is split
/// into grid_rows x grid_cols near-equal tiles and each tile is thresholded
/// independently; foreground is the dark side (pixel <= tile threshold),
/// which is where stained cells sit on a bright-field image. A near-uniform
/// tile (between-class variance < 1.0) falls back to the global Otsu
/// threshold; if the whole image is constant the mask is empty.
///
/// Throws std::invalid_argument ("grid too fine") if any tile is smaller
/// than 8x8 pixels.
BinaryMask tiled_otsu(const GrayImage& img, int grid_rows, int grid_cols);

// ============================================================================
// Binary morphology (out-of-bounds pixels are background for both erode and
// dilate)
// ============================================================================

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);

/// Morphological opening: dilate(erode(mask)). Idempotent, anti-extensive.
BinaryMask open(const BinaryMask& mask, const StructuringElement& se);

// ============================================================================
// Labeling and distance
// ============================================================================

enum class Connectivity { Four = 4, Eight = 8 };

/// Maximal connected foreground regions, labeled 1..k in first-encounter
/// raster order; background stays 0.
LabelMap connected_components(const BinaryMask& mask, Connectivity connectivity);

/// Exact Euclidean distance transform: each foreground pixel maps to the
/// distance of the nearest background pixel, with the image border counting
/// as background; background pixels map to 0. Meijster's two-phase
/// algorithm, all-integer until the final sqrt.
DistanceMap distance_transform(const BinaryMask& mask);

}  // namespace smearscope
