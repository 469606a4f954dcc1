#include "smearscope/image.hpp"

#include <cstring>

namespace smearscope {

namespace {

void check_crop(int w, int h, const BoundingBox& box) {
    if (box.w < 1 || box.h < 1 || box.x < 0 || box.y < 0 ||
        box.right() > w || box.bottom() > h) {
        throw std::invalid_argument("crop: box outside image bounds");
    }
}

}  // namespace

RgbImage crop(const RgbImage& img, const BoundingBox& box) {
    check_crop(img.width, img.height, box);
    RgbImage out(box.w, box.h);
    for (int y = 0; y < box.h; ++y) {
        const std::uint8_t* src = img.pixel(box.x, box.y + y);
        std::uint8_t* dst = out.pixel(0, y);
        std::memcpy(dst, src, static_cast<std::size_t>(box.w) * 3);
    }
    return out;
}

GrayImage crop(const GrayImage& img, const BoundingBox& box) {
    check_crop(img.width, img.height, box);
    GrayImage out(box.w, box.h);
    for (int y = 0; y < box.h; ++y) {
        const std::uint8_t* src =
            img.data.data() + static_cast<std::size_t>(box.y + y) * img.width + box.x;
        std::memcpy(&out.at(0, y), src, static_cast<std::size_t>(box.w));
    }
    return out;
}

}  // namespace smearscope
