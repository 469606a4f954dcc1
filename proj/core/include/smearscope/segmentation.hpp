#pragma once

#include <vector>

#include "smearscope/image.hpp"

namespace smearscope {

struct SegmentationConfig {
    int grid_rows = 4;
    int grid_cols = 4;
    StructuringElement open_se{SEShape::Disk, 2};
    StructuringElement erode_se{SEShape::Disk, 1};
    int erode_iters = 2;
    /// Marker threshold as a fraction of each component's distance maximum.
    double marker_fraction = 0.5;
    /// Labels smaller than this fraction of the median label area are
    /// dropped as artifacts.
    double min_area_fraction = 0.15;

    void validate() const;
};

struct CellDetection {
    BoundingBox box;
    std::int32_t label_id = 0;
    std::int64_t area = 0;
};

/// Watershed seeds: per connected component of the mask, the distance map is
/// thresholded at marker_fraction x (that component's maximum); connected
/// regions of the surviving pixels become marker labels. An empty mask
/// yields zero markers.
LabelMap make_markers(const BinaryMask& mask, const DistanceMap& dist, double marker_fraction);

/// Marker-controlled watershed by priority flood over the negated distance
/// map, restricted to mask foreground: basins grow from the markers in
/// strictly descending distance order with FIFO tie-break, so the output is
/// reproducible bit-for-bit. Every foreground pixel ends up with the label
/// of the basin that reached it first; background stays 0.
///
/// Throws std::runtime_error ("no seeds") when markers has no labels, and
/// std::invalid_argument if a marker sits on background.
LabelMap watershed(const BinaryMask& mask, const LabelMap& markers, const DistanceMap& dist);

/// Full cell localization: grayscale, equalize, tiled Otsu, opening, erosion,
/// distance transform, markers, watershed, then a tight bounding box per
/// label. Small labels (area below min_area_fraction x median) are dropped.
/// Detections come back sorted by (y, x). An image with no foreground after
/// morphology yields an empty list.
std::vector<CellDetection> localize_cells(const RgbImage& img, const SegmentationConfig& cfg = {});

}  // namespace smearscope
