#include "smearscope/preprocess.hpp"

#include "smearscope/imaging.hpp"

namespace smearscope {

std::pair<RgbImage, BoundingBox> crop_largest_contour(const RgbImage& img) {
    if (img.width < 32 || img.height < 32)
        throw std::invalid_argument("crop_largest_contour: image must be at least 32x32");

    const GrayImage gray = to_grayscale(img);
    const GrayImage eq = equalize_histogram(gray);
    const OtsuResult otsu = otsu_threshold(eq);
    if (otsu.degenerate) {
        // Constant image: no vignette to find. All-black means no field at
        // all; anything else is all field.
        if (eq.data[0] == 0) throw std::runtime_error("no bright field found");
        return {img, img.bounds()};
    }
    const BinaryMask field = binarize(eq, otsu.threshold, Polarity::Above);
    const LabelMap labels = connected_components(field, Connectivity::Eight);
    if (labels.num_labels == 0) throw std::runtime_error("no bright field found");

    std::vector<std::int64_t> areas(labels.num_labels + 1, 0);
    for (auto l : labels.data) ++areas[l];
    int best = 1;
    for (int l = 2; l <= labels.num_labels; ++l)
        if (areas[l] > areas[best]) best = l;

    int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (labels.at(x, y) == best) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    const BoundingBox box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    return {crop(img, box), box};
}

std::pair<RgbImage, BoundingBox> crop_by_dark_ratio(const RgbImage& img,
                                                    std::uint8_t dark_cutoff,
                                                    double ratio_cutoff) {
    const GrayImage gray = to_grayscale(img);
    const int w = img.width;
    const int h = img.height;

    // Dark-pixel counts per row and per column, over the whole input.
    std::vector<int> row_dark(h, 0), col_dark(w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (gray.at(x, y) < dark_cutoff) {
                ++row_dark[y];
                ++col_dark[x];
            }

    const auto row_trimmed = [&](int y) {
        return static_cast<double>(row_dark[y]) / w > ratio_cutoff;
    };
    const auto col_trimmed = [&](int x) {
        return static_cast<double>(col_dark[x]) / h > ratio_cutoff;
    };

    int top = 0;
    while (top < h && row_trimmed(top)) ++top;
    if (top == h) throw std::runtime_error("no content rows survive");
    int bottom = h - 1;
    while (bottom > top && row_trimmed(bottom)) --bottom;

    int left = 0;
    while (left < w && col_trimmed(left)) ++left;
    if (left == w) throw std::runtime_error("no content rows survive");
    int right = w - 1;
    while (right > left && col_trimmed(right)) --right;

    const BoundingBox box{left, top, right - left + 1, bottom - top + 1};
    return {crop(img, box), box};
}

std::pair<RgbImage, CropReport> preprocess_field(const RgbImage& img,
                                                 const PreprocessConfig& cfg) {
    CropReport report;
    report.original_width = img.width;
    report.original_height = img.height;
    report.dark_intensity_cutoff = cfg.dark_cutoff;
    report.dark_ratio_cutoff = cfg.ratio_cutoff;

    if (cfg.skip_vignette) {
        report.contour_crop_rect = img.bounds();
        report.ratio_crop_rect = img.bounds();
        return {img, report};
    }

    auto [contour_img, contour_rect] = crop_largest_contour(img);
    report.contour_crop_rect = contour_rect;

    auto [final_img, ratio_rect] = crop_by_dark_ratio(contour_img, cfg.dark_cutoff,
                                                      cfg.ratio_cutoff);
    // Back to original-image coordinates.
    report.ratio_crop_rect = {contour_rect.x + ratio_rect.x, contour_rect.y + ratio_rect.y,
                              ratio_rect.w, ratio_rect.h};
    return {std::move(final_img), report};
}

}  // namespace smearscope
