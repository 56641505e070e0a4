#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppd/depth_codec.hpp"
#include "ppd/image_io.hpp"

namespace ppd::report {

struct CurveRow {
    double depth = 0.0;
    int code = 0;
    double decoded = 0.0;
    double step = 0.0;   ///< quantization step at `depth`
    double error = 0.0;  ///< |decoded - depth|
};

/// Samples the code curve on [from, to] every `step` meters (the end point is
/// always included). Throws InvalidInput unless d_min <= from < to <= d_max
/// and step > 0.
std::vector<CurveRow> codec_curve(const codec::CodecParams& p, double from, double to, double step);

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curve_csv(const std::string& path);

struct BandwidthRow {
    std::string name;
    codec::StreamSpec spec;
    codec::Bandwidth bw;
};

/// Uncompressed RGB (3 x uint8), float depth (1 x float32) and their sum at
/// the given resolution and frame rate.
std::vector<BandwidthRow> raw_bandwidth(int width = 672, int height = 376, double fps = 30.0);

struct StreamOptions {
    int frames = 30;
    int width = 672;
    int height = 376;
    double fps = 30.0;
    double speed = 10.0 / 3.6;  ///< camera travel along the track between frames
    std::string track = "r7_80";
    std::uint64_t seed = 1;
    io::Container rgb = io::Container::kJpeg;
    io::Container depth = io::Container::kJpeg;
    int quality = 80;
    int workers = 0;
    codec::CodecParams codec{};
};

struct CompressedStream {
    int frames = 0;
    double rgb_bytes = 0.0;    ///< mean per frame
    double depth_bytes = 0.0;  ///< mean per frame
    codec::Bandwidth rgb_bw, depth_bw, total_bw;
};

/// Renders a drive along the track in the seeded roadside scene, encodes
/// every frame and reports the mean container sizes as bandwidth.
CompressedStream measure_compressed_stream(const StreamOptions& opts);

}  // namespace ppd::report
