#include "ppd/depth_codec.hpp"

#include <cmath>
#include <string>

#include "ppd/config.hpp"
#include "ppd/error.hpp"

namespace ppd::codec {

void CodecParams::validate() const {
    if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(c)) throw InvalidInput("codec: a must be finite and > 0");
    if (!(d_min < d_max)) throw InvalidInput("codec: d_min must be < d_max");
    if (!(d_min > 0.0)) throw InvalidInput("codec: d_min must be > 0");
    if (std::round(code_value(d_min, *this)) != 0.0 || std::round(code_value(d_max, *this)) != 255.0) {
        throw InvalidInput("codec: parameters must map d_min to code 0 and d_max to code 255");
    }
}

double code_value(double depth, const CodecParams& p) {
    return std::log(p.a * (depth - 1.0) + 0.01) / p.a + p.c;
}

EncodeResult encode_depth_checked(double depth, const CodecParams& p) {
    if (!std::isfinite(depth) || depth <= 0.0) {
        throw InvalidInput("encode_depth: depth must be finite and > 0, got " + std::to_string(depth));
    }
    if (depth < p.d_min) return {0, true};

    // std::round is half-away-from-zero.
    const double y = std::round(code_value(depth, p));
    if (y <= 0.0) return {0, false};
    if (y <= 255.0) return {static_cast<std::uint8_t>(y), false};
    if (p.overflow == OverflowMode::kWrap) {
        const auto wide = static_cast<long long>(y);
        return {static_cast<std::uint8_t>(wide & 0xFF), false};
    }
    return {255, false};
}

std::uint8_t encode_depth(double depth, const CodecParams& p) { return encode_depth_checked(depth, p).code; }

double decode_depth(std::uint8_t code, const CodecParams& p) {
    return 1.0 + (std::exp(p.a * (static_cast<double>(code) - p.c)) - 0.01) / p.a;
}

double quantization_step(double depth, const CodecParams& p) {
    if (!(depth >= p.d_min && depth <= p.d_max)) {
        throw InvalidInput("quantization_step: depth outside [d_min, d_max]: " + std::to_string(depth));
    }
    return p.a * (depth - 1.0) + 0.01;
}

EncodedDepthMap encode_map(const DepthMap& dm, const CodecParams& p) {
    if (dm.width <= 0 || dm.height <= 0) throw InvalidInput("encode_map: empty depth map");
    if (dm.data.size() != dm.pixel_count()) throw InvalidInput("encode_map: data size does not match dimensions");
    EncodedDepthMap out{dm.width, dm.height, std::vector<std::uint8_t>(dm.data.size())};
    for (std::size_t i = 0; i < dm.data.size(); ++i) {
        const float d = dm.data[i];
        out.codes[i] = DepthMap::is_valid(d) ? encode_depth(d, p) : std::uint8_t{255};
    }
    return out;
}

DepthMap decode_map(const EncodedDepthMap& e, const CodecParams& p, double fov_h, double fov_v) {
    // One table lookup per pixel instead of an exp per pixel.
    float table[256];
    for (int code = 0; code < 256; ++code) table[code] = static_cast<float>(decode_depth(static_cast<std::uint8_t>(code), p));

    DepthMap out(e.width, e.height, fov_h, fov_v);
    for (std::size_t i = 0; i < e.codes.size(); ++i) out.data[i] = table[e.codes[i]];
    return out;
}

Bandwidth bandwidth_estimate(const StreamSpec& s) {
    if (s.byte_depth < 0 || s.height < 0 || s.width < 0 || s.channels < 0 || s.fps < 0.0) {
        throw InvalidInput("bandwidth_estimate: negative stream parameter");
    }
    const double bytes = static_cast<double>(s.byte_depth) * s.height * s.width * s.channels * s.fps;
    return {bytes, bytes / 1e6, bytes / 1048576.0};
}

CodecParams load_params(const std::string& path) {
    const auto cfg = KeyValueConfig::load(path);
    CodecParams p;
    p.a = cfg.get_double("a", p.a);
    p.c = cfg.get_double("c", p.c);
    p.d_min = cfg.get_double("d_min", p.d_min);
    p.d_max = cfg.get_double("d_max", p.d_max);
    const auto mode = cfg.get_string("overflow_mode", "saturate");
    if (mode == "saturate") {
        p.overflow = OverflowMode::kSaturate;
    } else if (mode == "wrap") {
        p.overflow = OverflowMode::kWrap;
    } else {
        throw InvalidInput("overflow_mode must be 'saturate' or 'wrap', got '" + mode + "'");
    }
    p.validate();
    return p;
}

}  // namespace ppd::codec
