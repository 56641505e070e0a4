#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ppd/depth_codec.hpp"
#include "ppd/image.hpp"

namespace ppd::io {

enum class Container { kJpeg, kPng };

/// Compressed container bytes. `quality` applies to JPEG only.
std::vector<std::uint8_t> encode_rgb(const RgbImage& img, Container c, int quality = 80);
std::vector<std::uint8_t> encode_codes(const codec::EncodedDepthMap& e, Container c, int quality = 80);
/// Throws DecodeError on malformed bytes or a channel-count mismatch.
RgbImage decode_rgb(std::span<const std::uint8_t> bytes);
codec::EncodedDepthMap decode_codes(std::span<const std::uint8_t> bytes);

/// Container chosen from the extension (.png, .jpg/.jpeg). Reads throw
/// InvalidInput when the file is missing and DecodeError when unreadable.
RgbImage read_rgb(const std::string& path);
void write_rgb(const std::string& path, const RgbImage& img, int quality = 95);
codec::EncodedDepthMap read_codes(const std::string& path);
void write_codes(const std::string& path, const codec::EncodedDepthMap& e);
/// Writes a 0/255 single-channel PNG.
void write_mask(const std::string& path, int width, int height, std::span<const std::uint8_t> mask);

}  // namespace ppd::io
