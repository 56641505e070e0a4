#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppd/image.hpp"

namespace ppd::codec {

/// How depths beyond the far limit are coded.
enum class OverflowMode {
    kSaturate,  ///< clamp to code 255
    kWrap,      ///< uint8 wrap-around, reproduces the "buildings moved closer" artifact
};

/// Parameters of the logarithmic 8-bit depth code
///   y = ln(a (d - 1) + 0.01) / a + c
/// chosen so that [d_min, d_max] = [1, 20] m spans codes [0, 255] with
/// resolution growing linearly in depth.
struct CodecParams {
    double a = 0.0126194;
    double c = 364.92737;
    double d_min = 1.0;
    double d_max = 20.0;
    OverflowMode overflow = OverflowMode::kSaturate;

    /// Throws InvalidInput unless a > 0, d_min < d_max and the endpoints
    /// round to 0 and 255.
    void validate() const;
};

/// 8-bit depth codes, row-major, same grid as the companion RGB image.
struct EncodedDepthMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> codes;

    bool operator==(const EncodedDepthMap&) const = default;
};

/// Result of encoding one depth value; `below_range` flags d < d_min,
/// which is clamped to code 0.
struct EncodeResult {
    std::uint8_t code = 0;
    bool below_range = false;
};

/// Real-valued code before rounding.
double code_value(double depth, const CodecParams& p);

EncodeResult encode_depth_checked(double depth, const CodecParams& p);

/// Throws InvalidInput for non-finite or non-positive depth.
std::uint8_t encode_depth(double depth, const CodecParams& p);

/// Algebraic inverse of the code curve.
double decode_depth(std::uint8_t code, const CodecParams& p);

/// Depth spanned by one code unit at `depth`: a (d - 1) + 0.01.
/// Throws InvalidInput outside [d_min, d_max].
double quantization_step(double depth, const CodecParams& p);

/// Invalid (sentinel) depths are coded as 255. Throws on empty maps.
EncodedDepthMap encode_map(const DepthMap& dm, const CodecParams& p);

/// Elementwise decode. FOVs are not part of the code and must be set by the caller.
DepthMap decode_map(const EncodedDepthMap& e, const CodecParams& p, double fov_h = 0.0,
                    double fov_v = 0.0);

struct StreamSpec {
    int byte_depth = 1;
    int height = 376;
    int width = 672;
    int channels = 3;
    double fps = 30.0;
};

struct Bandwidth {
    double bytes_per_s = 0.0;
    double mb_per_s = 0.0;   // 10^6 bytes
    double mib_per_s = 0.0;  // 2^20 bytes
};

Bandwidth bandwidth_estimate(const StreamSpec& s);

/// Reads `a`, `c`, `d_min`, `d_max`, `overflow_mode` (saturate|wrap) from a
/// key/value config file; missing keys keep their defaults.
CodecParams load_params(const std::string& path);

}  // namespace ppd::codec
