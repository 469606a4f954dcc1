#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smearscope/image.hpp"

namespace smearscope {

/// Decode a PNG or JPEG file (sniffed by magic bytes) into 8-bit RGB.
/// Throws std::runtime_error on unreadable or undecodable input.
RgbImage read_image(const std::string& path);

/// Decode PNG/JPEG from an in-memory buffer (HTTP upload path).
RgbImage decode_image(const std::uint8_t* bytes, std::size_t size);

/// Encode to PNG, 8-bit RGB.
void write_png(const std::string& path, const RgbImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);

}  // namespace smearscope
