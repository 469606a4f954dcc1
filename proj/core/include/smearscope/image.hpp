#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace smearscope {

/// Axis-aligned rectangle in pixel coordinates: (x, y) is the top-left
/// corner, w and h are always >= 1 for a valid box.
struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }    // exclusive
    int bottom() const { return y + h; }   // exclusive
    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }

    bool contains(int px, int py) const {
        return px >= x && px < right() && py >= y && py < bottom();
    }
    bool contains(const BoundingBox& other) const {
        return other.x >= x && other.y >= y &&
               other.right() <= right() && other.bottom() <= bottom();
    }
    bool operator==(const BoundingBox& other) const = default;
};

/// 8-bit RGB raster, row-major interleaved triples (R,G,B).
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // size = width * height * 3

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0)
        : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("RgbImage: dimensions must be >= 1");
        data.resize(static_cast<std::size_t>(w) * h * 3);
        for (std::size_t i = 0; i < data.size(); i += 3) {
            data[i] = r;
            data[i + 1] = g;
            data[i + 2] = b;
        }
    }

    std::uint8_t* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = pixel(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
    BoundingBox bounds() const { return {0, 0, width, height}; }
    bool operator==(const RgbImage& other) const = default;
};

/// 8-bit single-channel raster, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // size = width * height

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h, fill);
    }

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool operator==(const GrayImage& other) const = default;
};

/// Binary raster, row-major; nonzero = foreground.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("BinaryMask: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
    }

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
    bool operator==(const BinaryMask& other) const = default;
};

/// Region labeling: 0 = background, 1..num_labels = region ids.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> data;
    int num_labels = 0;

    LabelMap() = default;
    LabelMap(int w, int h) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("LabelMap: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h, 0);
    }

    std::int32_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-pixel real-valued map (e.g. a distance transform), row-major.
struct DistanceMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    DistanceMap() = default;
    DistanceMap(int w, int h, double fill = 0.0) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("DistanceMap: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * h, fill);
    }

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

enum class SEShape { Disk, Square, Cross };

/// Morphological structuring element; the footprint is symmetric about its
/// center by construction.
struct StructuringElement {
    SEShape shape = SEShape::Disk;
    int radius = 1;

    StructuringElement() = default;
    StructuringElement(SEShape s, int r) : shape(s), radius(r) {
        if (r < 1) throw std::invalid_argument("StructuringElement: radius must be >= 1");
    }

    /// Offsets (dx, dy) covered by the footprint, center included.
    std::vector<std::pair<int, int>> offsets() const {
        std::vector<std::pair<int, int>> out;
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                bool in = false;
                switch (shape) {
                    case SEShape::Disk: in = dx * dx + dy * dy <= radius * radius; break;
                    case SEShape::Square: in = true; break;
                    case SEShape::Cross: in = dx == 0 || dy == 0; break;
                }
                if (in) out.emplace_back(dx, dy);
            }
        }
        return out;
    }
};

/// Crop to a box that must lie fully inside the image.
RgbImage crop(const RgbImage& img, const BoundingBox& box);
GrayImage crop(const GrayImage& img, const BoundingBox& box);

}  // namespace smearscope
