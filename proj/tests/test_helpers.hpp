#pragma once

#include <cstdint>
#include <vector>

#include "smearscope/image.hpp"
#include "smearscope/rng.hpp"

namespace helpers {

inline smearscope::GrayImage random_gray(int w, int h, smearscope::Rng& rng) {
    smearscope::GrayImage img(w, h);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.next_below(256));
    return img;
}

inline smearscope::BinaryMask random_mask(int w, int h, smearscope::Rng& rng,
                                          double fg_prob = 0.5) {
    smearscope::BinaryMask mask(w, h);
    for (auto& v : mask.data) v = rng.next_double() < fg_prob ? 1 : 0;
    return mask;
}

inline void stamp_disk(smearscope::BinaryMask& mask, int cx, int cy, int r) {
    for (int y = std::max(0, cy - r); y <= std::min(mask.height - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(mask.width - 1, cx + r); ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) mask.set(x, y, true);
}

/// The merged-pair fixture: two radius-8 disks with centers 14 px apart in a
/// frame wide enough that the border does not interfere.
inline smearscope::BinaryMask merged_disks_fixture() {
    smearscope::BinaryMask mask(48, 32);
    stamp_disk(mask, 17, 16, 8);
    stamp_disk(mask, 31, 16, 8);
    return mask;
}

inline smearscope::BinaryMask single_disk_fixture(int w = 32, int h = 32, int r = 8) {
    smearscope::BinaryMask mask(w, h);
    stamp_disk(mask, w / 2, h / 2, r);
    return mask;
}

}  // namespace helpers
