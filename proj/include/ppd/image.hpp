#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "ppd/error.hpp"

namespace ppd {

/// 8-bit, 3-channel, row-major interleaved RGB image.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // width * height * 3

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {
        if (w < 0 || h < 0) throw InvalidInput("RgbImage: negative dimensions");
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::uint8_t* at(int row, int col) { return &data[(static_cast<std::size_t>(row) * width + col) * 3]; }
    const std::uint8_t* at(int row, int col) const {
        return &data[(static_cast<std::size_t>(row) * width + col) * 3];
    }

    bool operator==(const RgbImage&) const = default;
};

/// Metric depth along the optical axis, registered 1:1 with an RgbImage.
///
/// Unknown depth is stored as `kInvalid` (NaN); `is_valid` is the only test
/// callers should use.
struct DepthMap {
    static constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();

    int width = 0;
    int height = 0;
    std::vector<float> data;  // meters, row-major
    double fov_h = 0.0;       // radians
    double fov_v = 0.0;       // radians

    DepthMap() = default;
    DepthMap(int w, int h, double fovh = 0.0, double fovv = 0.0, float fill = kInvalid)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill), fov_h(fovh), fov_v(fovv) {
        if (w < 0 || h < 0) throw InvalidInput("DepthMap: negative dimensions");
    }

    static bool is_valid(float d) { return std::isfinite(d) && d > 0.0f; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    float& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    float at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
};

}  // namespace ppd
