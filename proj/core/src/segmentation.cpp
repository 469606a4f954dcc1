#include "smearscope/segmentation.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

#include "smearscope/imaging.hpp"

namespace smearscope {

void SegmentationConfig::validate() const {
    if (grid_rows < 1 || grid_cols < 1)
        throw std::invalid_argument("SegmentationConfig: grid dimensions must be >= 1");
    if (erode_iters < 1)
        throw std::invalid_argument("SegmentationConfig: erode_iters must be >= 1");
    if (!(marker_fraction > 0.0 && marker_fraction < 1.0))
        throw std::invalid_argument("SegmentationConfig: marker_fraction must be in (0,1)");
    if (!(min_area_fraction >= 0.0 && min_area_fraction < 1.0))
        throw std::invalid_argument("SegmentationConfig: min_area_fraction must be in [0,1)");
}

LabelMap make_markers(const BinaryMask& mask, const DistanceMap& dist, double marker_fraction) {
    if (mask.width != dist.width || mask.height != dist.height)
        throw std::invalid_argument("make_markers: mask/distance size mismatch");

    const LabelMap components = connected_components(mask, Connectivity::Eight);

    // Per-component distance maximum.
    std::vector<double> max_dist(components.num_labels + 1, 0.0);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const auto l = components.at(x, y);
            if (l > 0) max_dist[l] = std::max(max_dist[l], dist.at(x, y));
        }

    BinaryMask sure_fg(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const auto l = components.at(x, y);
            if (l > 0 && dist.at(x, y) >= marker_fraction * max_dist[l])
                sure_fg.set(x, y, true);
        }
    return connected_components(sure_fg, Connectivity::Eight);
}

namespace {

// Queue entry for the priority flood: highest distance first, FIFO within
// equal distance (seq breaks ties by push order).
struct FloodEntry {
    double priority;
    std::uint64_t seq;
    int x, y;
    std::int32_t label;
};

struct FloodOrder {
    bool operator()(const FloodEntry& a, const FloodEntry& b) const {
        if (a.priority != b.priority) return a.priority < b.priority;  // max-heap
        return a.seq > b.seq;                                          // FIFO
    }
};

}  // namespace

LabelMap watershed(const BinaryMask& mask, const LabelMap& markers, const DistanceMap& dist) {
    if (mask.width != markers.width || mask.height != markers.height ||
        mask.width != dist.width || mask.height != dist.height)
        throw std::invalid_argument("watershed: input size mismatch");
    if (markers.num_labels == 0) throw std::runtime_error("watershed: no seeds");

    const int w = mask.width;
    const int h = mask.height;
    LabelMap out(w, h);
    out.num_labels = markers.num_labels;

    static constexpr int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};

    std::priority_queue<FloodEntry, std::vector<FloodEntry>, FloodOrder> queue;
    std::uint64_t seq = 0;

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto l = markers.at(x, y);
            if (l == 0) continue;
            if (!mask.at(x, y))
                throw std::invalid_argument("watershed: marker on background");
            out.at(x, y) = l;
            queue.push({dist.at(x, y), seq++, x, y, l});
        }

    while (!queue.empty()) {
        const FloodEntry e = queue.top();
        queue.pop();
        for (int k = 0; k < 8; ++k) {
            const int nx = e.x + dx8[k];
            const int ny = e.y + dy8[k];
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            if (!mask.at(nx, ny) || out.at(nx, ny) != 0) continue;
            out.at(nx, ny) = e.label;
            queue.push({dist.at(nx, ny), seq++, nx, ny, e.label});
        }
    }
    return out;
}

std::vector<CellDetection> localize_cells(const RgbImage& img, const SegmentationConfig& cfg) {
    cfg.validate();

    const GrayImage gray = to_grayscale(img);
    const GrayImage eq = equalize_histogram(gray);
    BinaryMask mask = tiled_otsu(eq, cfg.grid_rows, cfg.grid_cols);
    mask = open(mask, cfg.open_se);
    for (int i = 0; i < cfg.erode_iters; ++i) mask = erode(mask, cfg.erode_se);

    if (mask.count() == 0) return {};

    const DistanceMap dist = distance_transform(mask);
    const LabelMap markers = make_markers(mask, dist, cfg.marker_fraction);
    if (markers.num_labels == 0) return {};
    const LabelMap labels = watershed(mask, markers, dist);

    // Tight bounding box and area per label.
    struct Extent {
        int x0, y0, x1, y1;
        std::int64_t area = 0;
    };
    std::vector<Extent> extents(labels.num_labels + 1,
                                {labels.width, labels.height, -1, -1, 0});
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            const auto l = labels.at(x, y);
            if (l == 0) continue;
            auto& e = extents[l];
            e.x0 = std::min(e.x0, x);
            e.y0 = std::min(e.y0, y);
            e.x1 = std::max(e.x1, x);
            e.y1 = std::max(e.y1, y);
            ++e.area;
        }

    std::vector<std::int64_t> areas;
    for (int l = 1; l <= labels.num_labels; ++l)
        if (extents[l].area > 0) areas.push_back(extents[l].area);
    if (areas.empty()) return {};
    std::sort(areas.begin(), areas.end());
    const double median = areas.size() % 2 == 1
                              ? static_cast<double>(areas[areas.size() / 2])
                              : 0.5 * (static_cast<double>(areas[areas.size() / 2 - 1]) +
                                       static_cast<double>(areas[areas.size() / 2]));
    const double min_area = cfg.min_area_fraction * median;

    std::vector<CellDetection> detections;
    for (int l = 1; l <= labels.num_labels; ++l) {
        const auto& e = extents[l];
        if (e.area == 0 || static_cast<double>(e.area) < min_area) continue;
        detections.push_back({{e.x0, e.y0, e.x1 - e.x0 + 1, e.y1 - e.y0 + 1}, l, e.area});
    }
    std::sort(detections.begin(), detections.end(), [](const auto& a, const auto& b) {
        if (a.box.y != b.box.y) return a.box.y < b.box.y;
        if (a.box.x != b.box.x) return a.box.x < b.box.x;
        return a.label_id < b.label_id;
    });
    return detections;
}

}  // namespace smearscope
