#include "smearscope/imaging.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <queue>

namespace smearscope {

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = img.data.data() + i * 3;
        const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        long v = std::lround(y);
        out.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
    }
    return out;
}

namespace {

std::array<std::int64_t, 256> histogram_of(const GrayImage& img) {
    std::array<std::int64_t, 256> hist{};
    for (auto v : img.data) ++hist[v];
    return hist;
}

}  // namespace

GrayImage equalize_histogram(const GrayImage& img, bool* degenerate) {
    if (img.size() == 0) throw std::invalid_argument("equalize_histogram: empty image");
    const auto hist = histogram_of(img);

    std::array<std::int64_t, 256> cdf{};
    std::int64_t running = 0;
    std::int64_t cdf_min = 0;
    for (int v = 0; v < 256; ++v) {
        running += hist[v];
        cdf[v] = running;
        if (cdf_min == 0 && running > 0) cdf_min = running;
    }
    const std::int64_t n = static_cast<std::int64_t>(img.size());

    if (n == cdf_min) {
        // Constant image: the mapping denominator is zero.
        if (degenerate) *degenerate = true;
        return img;
    }
    if (degenerate) *degenerate = false;

    std::array<std::uint8_t, 256> lut{};
    const double denom = static_cast<double>(n - cdf_min);
    for (int v = 0; v < 256; ++v) {
        const double mapped = 255.0 * static_cast<double>(cdf[v] - cdf_min) / denom;
        lut[v] = static_cast<std::uint8_t>(std::clamp(std::lround(mapped), 0L, 255L));
    }

    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = lut[img.data[i]];
    return out;
}

namespace {

// Between-class variance argmax over all 256 thresholds, from a histogram.
// Weights are normalized so the variance is in intensity^2 units.
OtsuResult otsu_from_histogram(const std::array<std::int64_t, 256>& hist, std::int64_t n) {
    std::int64_t total_sum = 0;
    for (int v = 0; v < 256; ++v) total_sum += static_cast<std::int64_t>(v) * hist[v];

    OtsuResult best;
    double best_var = -1.0;
    std::int64_t w0 = 0;
    std::int64_t sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[t];
        sum0 += static_cast<std::int64_t>(t) * hist[t];
        const std::int64_t w1 = n - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = static_cast<double>(sum0) / static_cast<double>(w0);
        const double mu1 = static_cast<double>(total_sum - sum0) / static_cast<double>(w1);
        const double d = mu0 - mu1;
        const double var = (static_cast<double>(w0) / static_cast<double>(n)) *
                           (static_cast<double>(w1) / static_cast<double>(n)) * d * d;
        if (var > best_var) {
            best_var = var;
            best.threshold = static_cast<std::uint8_t>(t);
        }
    }

    if (best_var < 0.0) {
        // Constant image: every split leaves one class empty.
        int v = 0;
        while (hist[v] == 0) ++v;
        return {static_cast<std::uint8_t>(v), 0.0, true};
    }
    best.variance = best_var;
    best.degenerate = false;
    return best;
}

}  // namespace

OtsuResult otsu_threshold(const GrayImage& img) {
    if (img.size() == 0) throw std::invalid_argument("otsu_threshold: empty image");
    return otsu_from_histogram(histogram_of(img), static_cast<std::int64_t>(img.size()));
}

BinaryMask binarize(const GrayImage& img, std::uint8_t threshold, Polarity polarity) {
    BinaryMask out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const bool fg = polarity == Polarity::Above ? img.data[i] > threshold
                                                    : img.data[i] < threshold;
        out.data[i] = fg ? 1 : 0;
    }
    return out;
}

BinaryMask tiled_otsu(const GrayImage& img, int grid_rows, int grid_cols) {
    if (grid_rows < 1 || grid_cols < 1)
        throw std::invalid_argument("tiled_otsu: grid dimensions must be >= 1");
    if (img.size() == 0) throw std::invalid_argument("tiled_otsu: empty image");

    // Near-equal tile edges.
    std::vector<int> row_edges(grid_rows + 1), col_edges(grid_cols + 1);
    for (int i = 0; i <= grid_rows; ++i)
        row_edges[i] = static_cast<int>(static_cast<std::int64_t>(i) * img.height / grid_rows);
    for (int j = 0; j <= grid_cols; ++j)
        col_edges[j] = static_cast<int>(static_cast<std::int64_t>(j) * img.width / grid_cols);
    for (int i = 0; i < grid_rows; ++i)
        for (int j = 0; j < grid_cols; ++j)
            if (row_edges[i + 1] - row_edges[i] < 8 || col_edges[j + 1] - col_edges[j] < 8)
                throw std::invalid_argument("tiled_otsu: grid too fine");

    const OtsuResult global = otsu_threshold(img);
    BinaryMask out(img.width, img.height);
    if (global.degenerate) return out;  // constant image, nothing to call a cell

    constexpr double kDegenerateVariance = 1.0;
    for (int i = 0; i < grid_rows; ++i) {
        for (int j = 0; j < grid_cols; ++j) {
            std::array<std::int64_t, 256> hist{};
            std::int64_t n = 0;
            for (int y = row_edges[i]; y < row_edges[i + 1]; ++y)
                for (int x = col_edges[j]; x < col_edges[j + 1]; ++x) {
                    ++hist[img.at(x, y)];
                    ++n;
                }
            const OtsuResult tile = otsu_from_histogram(hist, n);
            const std::uint8_t t =
                tile.variance < kDegenerateVariance ? global.threshold : tile.threshold;
            // Foreground = dark side (stained cells on a bright field).
            for (int y = row_edges[i]; y < row_edges[i + 1]; ++y)
                for (int x = col_edges[j]; x < col_edges[j + 1]; ++x)
                    out.set(x, y, img.at(x, y) <= t);
        }
    }
    return out;
}

// ============================================================================
// Morphology
// ============================================================================

namespace {

enum class MorphOp { Erode, Dilate };

BinaryMask morph(const BinaryMask& mask, const StructuringElement& se, MorphOp op) {
    BinaryMask out(mask.width, mask.height);
    const auto offsets = se.offsets();
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool result = op == MorphOp::Erode;
            for (const auto& [dx, dy] : offsets) {
                const int nx = x + dx;
                const int ny = y + dy;
                const bool v = nx >= 0 && nx < mask.width && ny >= 0 && ny < mask.height &&
                               mask.at(nx, ny);
                if (op == MorphOp::Erode) {
                    if (!v) {
                        result = false;
                        break;
                    }
                } else {
                    if (v) {
                        result = true;
                        break;
                    }
                }
            }
            out.set(x, y, result);
        }
    }
    return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    return morph(mask, se, MorphOp::Erode);
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    return morph(mask, se, MorphOp::Dilate);
}

BinaryMask open(const BinaryMask& mask, const StructuringElement& se) {
    return dilate(erode(mask, se), se);
}

// ============================================================================
// Connected components
// ============================================================================

LabelMap connected_components(const BinaryMask& mask, Connectivity connectivity) {
    LabelMap out(mask.width, mask.height);
    const int w = mask.width;
    const int h = mask.height;
    static constexpr int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int dx4[] = {0, -1, 1, 0};
    static constexpr int dy4[] = {-1, 0, 0, 1};
    const int* dx = connectivity == Connectivity::Eight ? dx8 : dx4;
    const int* dy = connectivity == Connectivity::Eight ? dy8 : dy4;
    const int ndirs = connectivity == Connectivity::Eight ? 8 : 4;

    std::vector<std::pair<int, int>> queue;
    int next_label = 0;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            if (!mask.at(x0, y0) || out.at(x0, y0) != 0) continue;
            ++next_label;
            out.at(x0, y0) = next_label;
            queue.clear();
            queue.emplace_back(x0, y0);
            for (std::size_t head = 0; head < queue.size(); ++head) {
                const auto [x, y] = queue[head];
                for (int k = 0; k < ndirs; ++k) {
                    const int nx = x + dx[k];
                    const int ny = y + dy[k];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    if (!mask.at(nx, ny) || out.at(nx, ny) != 0) continue;
                    out.at(nx, ny) = next_label;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    out.num_labels = next_label;
    return out;
}

// ============================================================================
// Distance transform (Meijster, exact Euclidean)
// ============================================================================

namespace {

// Phase 2 helpers on squared distances; all-integer, so the result is the
// exact squared Euclidean distance.
inline std::int64_t edt_f(std::int64_t x, std::int64_t i, std::int64_t g_i) {
    return (x - i) * (x - i) + g_i * g_i;
}
inline std::int64_t edt_sep(std::int64_t i, std::int64_t u, std::int64_t g_i, std::int64_t g_u) {
    return (u * u - i * i + g_u * g_u - g_i * g_i) / (2 * (u - i));
}

}  // namespace

DistanceMap distance_transform(const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    DistanceMap out(w, h);

    // Column scan. The image border counts as background, so the vertical
    // distance at row y is capped by y+1 and h-y.
    std::vector<std::int64_t> g(static_cast<std::size_t>(w) * h);
    for (int x = 0; x < w; ++x) {
        g[x] = mask.at(x, 0) ? 1 : 0;
        for (int y = 1; y < h; ++y)
            g[static_cast<std::size_t>(y) * w + x] =
                mask.at(x, y) ? g[static_cast<std::size_t>(y - 1) * w + x] + 1 : 0;
        std::int64_t below = 0;
        for (int y = h - 1; y >= 0; --y) {
            auto& gy = g[static_cast<std::size_t>(y) * w + x];
            below = mask.at(x, y) ? below + 1 : 0;
            gy = std::min(gy, below);
        }
    }

    // Row scan: lower envelope of parabolas i -> (x-i)^2 + g(i)^2. The
    // horizontal border contributes virtual background columns at -1 and w.
    std::vector<int> s(w + 2), t(w + 2);
    std::vector<std::int64_t> grow(w + 2);
    for (int y = 0; y < h; ++y) {
        // Virtual columns get g = 0; interior columns shift by one.
        grow[0] = 0;
        grow[w + 1] = 0;
        for (int x = 0; x < w; ++x) grow[x + 1] = g[static_cast<std::size_t>(y) * w + x];

        int q = 0;
        s[0] = 0;
        t[0] = 0;
        for (int u = 1; u < w + 2; ++u) {
            while (q >= 0 && edt_f(t[q], s[q], grow[s[q]]) > edt_f(t[q], u, grow[u])) --q;
            if (q < 0) {
                q = 0;
                s[0] = u;
            } else {
                const std::int64_t sep = edt_sep(s[q], u, grow[s[q]], grow[u]);
                if (sep + 1 < w + 2) {
                    ++q;
                    s[q] = u;
                    t[q] = static_cast<int>(sep) + 1;
                }
            }
        }
        for (int u = w + 1; u >= 0; --u) {
            if (u >= 1 && u <= w) {
                const std::int64_t d2 = edt_f(u, s[q], grow[s[q]]);
                out.at(u - 1, y) = std::sqrt(static_cast<double>(d2));
            }
            if (q > 0 && u == t[q]) --q;
        }
    }
    return out;
}

}  // namespace smearscope
