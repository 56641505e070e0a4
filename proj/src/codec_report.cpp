#include "ppd/codec_report.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "ppd/config.hpp"
#include "ppd/error.hpp"
#include "ppd/sim_world.hpp"

namespace ppd::report {

std::vector<CurveRow> codec_curve(const codec::CodecParams& p, double from, double to, double step) {
    p.validate();
    if (!std::isfinite(from) || !std::isfinite(to) || !std::isfinite(step)) {
        throw InvalidInput("codec curve: non-finite range");
    }
    if (from < p.d_min || to > p.d_max || !(from < to)) {
        throw InvalidInput("codec curve: range must satisfy d_min <= from < to <= d_max");
    }
    if (!(step > 0.0)) throw InvalidInput("codec curve: step must be positive");
    std::vector<CurveRow> rows;
    const auto n = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long i = 0; i <= n + 1; ++i) {
        const double d = i <= n ? from + static_cast<double>(i) * step : to;
        if (i == n + 1 && std::abs(rows.back().depth - to) < 1e-9) break;
        CurveRow r;
        r.depth = d;
        r.code = codec::encode_depth(d, p);
        r.decoded = codec::decode_depth(static_cast<std::uint8_t>(r.code), p);
        r.step = codec::quantization_step(d, p);
        r.error = std::abs(r.decoded - d);
        rows.push_back(r);
    }
    return rows;
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    out.precision(17);
    out << "depth_m,code,decoded_m,step_m,error_m\n";
    for (const auto& r : rows) {
        out << r.depth << ',' << r.code << ',' << r.decoded << ',' << r.step << ',' << r.error << '\n';
    }
}

std::vector<CurveRow> read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::vector<CurveRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        const auto f = split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 5) throw InvalidInput(path + ": expected 5 fields");
        rows.push_back({std::stod(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    }
    return rows;
}

std::vector<BandwidthRow> raw_bandwidth(int width, int height, double fps) {
    const codec::StreamSpec rgb{1, height, width, 3, fps};
    const codec::StreamSpec depth{4, height, width, 1, fps};
    const auto a = codec::bandwidth_estimate(rgb);
    const auto b = codec::bandwidth_estimate(depth);
    codec::Bandwidth total{a.bytes_per_s + b.bytes_per_s, a.mb_per_s + b.mb_per_s, a.mib_per_s + b.mib_per_s};
    return {{"rgb", rgb, a}, {"depth", depth, b}, {"total", {0, height, width, 0, fps}, total}};
}

namespace {

codec::Bandwidth per_second(double bytes_per_frame, double fps) {
    const double b = bytes_per_frame * fps;
    return {b, b / 1e6, b / 1048576.0};
}

}  // namespace

CompressedStream measure_compressed_stream(const StreamOptions& opts) {
    if (opts.frames <= 0) throw InvalidInput("compressed stream: frames must be positive");
    if (!(opts.fps > 0.0)) throw InvalidInput("compressed stream: fps must be positive");
    const auto track = sim::Track::make(opts.track);
    const auto scene = sim::Scene::along_track(track, opts.seed);
    sim::CameraModel cam;
    cam.width = opts.width;
    cam.height = opts.height;
    cam.validate();
    const motion::VehicleGeometry geom{1.76, 0.8, 5.0 * std::numbers::pi / 180.0};

    double rgb_total = 0.0, depth_total = 0.0;
    for (int k = 0; k < opts.frames; ++k) {
        const double s = std::min(track.length(), 2.0 + opts.speed * k / opts.fps);
        const auto p = track.point_at(s);
        const motion::WorldPose axle{p.x, p.y, track.heading_at(s)};
        const auto pose = sim::camera_for(axle, geom, 1.5);
        const auto frame = sim::render(scene, pose, cam, opts.workers);
        rgb_total += static_cast<double>(io::encode_rgb(frame.rgb, opts.rgb, opts.quality).size());
        const auto codes = codec::encode_map(frame.depth, opts.codec);
        depth_total += static_cast<double>(io::encode_codes(codes, opts.depth, opts.quality).size());
    }
    CompressedStream r;
    r.frames = opts.frames;
    r.rgb_bytes = rgb_total / opts.frames;
    r.depth_bytes = depth_total / opts.frames;
    r.rgb_bw = per_second(r.rgb_bytes, opts.fps);
    r.depth_bw = per_second(r.depth_bytes, opts.fps);
    r.total_bw = per_second(r.rgb_bytes + r.depth_bytes, opts.fps);
    return r;
}

}  // namespace ppd::report
