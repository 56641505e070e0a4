// ppd: command-line entry points for the predictive display toolkit.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <string>

#include "ppd/codec_report.hpp"
#include "ppd/console_server.hpp"
#include "ppd/delay_model.hpp"
#include "ppd/depth_codec.hpp"
#include "ppd/error.hpp"
#include "ppd/image_io.hpp"
#include "ppd/projection.hpp"
#include "ppd/sim_world.hpp"
#include "ppd/teleop_loop.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ppd;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

enum class Level { kError, kWarn, kInfo, kDebug };

Level log_level() {
    const char* env = std::getenv("PP_LOG");
    const std::string v = env ? env : "info";
    if (v == "error" || v == "quiet") return Level::kError;
    if (v == "warn") return Level::kWarn;
    if (v == "debug" || v == "trace") return Level::kDebug;
    return Level::kInfo;
}

template <typename... Args>
void logf(Level lvl, const char* fmt, Args... args) {
    if (lvl > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] ", names[static_cast<int>(lvl)]);
    if constexpr (sizeof...(Args) == 0) {
        std::fputs(fmt, stderr);
    } else {
        std::fprintf(stderr, fmt, args...);
    }
    std::fputc('\n', stderr);
}

struct Global {
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";

    std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
    fs::path out(const std::string& name) const {
        fs::create_directories(out_dir);
        return fs::path(out_dir) / name;
    }
};

codec::CodecParams codec_from(const std::string& path) {
    return path.empty() ? codec::CodecParams{} : codec::load_params(path);
}

// ---- codec-report ----------------------------------------------------------

struct CodecReportArgs {
    std::string codec;
    double from = 1.0, to = 20.0, step = 1.0;
    std::string csv;
    int frames = 30;
    int quality = 80;
    bool no_stream = false;
};

int cmd_codec_report(const Global& g, const CodecReportArgs& a) {
    const auto p = codec_from(a.codec);
    const auto rows = report::codec_curve(p, a.from, a.to, a.step);
    std::printf("depth_m  code  decoded_m  step_m   error_m\n");
    for (const auto& r : rows) {
        std::printf("%7.3f  %4d  %9.4f  %.5f  %.5f\n", r.depth, r.code, r.decoded, r.step, r.error);
    }
    const auto csv = a.csv.empty() ? g.out("codec_curve.csv") : fs::path(a.csv);
    report::write_curve_csv(csv.string(), rows);
    logf(Level::kInfo, "curve written to %s", csv.c_str());

    json j;
    j["codec"] = {{"a", p.a}, {"c", p.c}, {"d_min", p.d_min}, {"d_max", p.d_max}};
    std::printf("\nuncompressed 376x672 @ 30 fps\n%-6s %4s %6s %5s %4s %9s %9s\n", "", "B", "height", "width", "ch",
                "MB/s", "MiB/s");
    for (const auto& r : report::raw_bandwidth()) {
        if (r.spec.channels == 0) {  // sum row
            std::printf("%-6s %4s %6s %5s %4s %9.2f %9.2f\n", r.name.c_str(), "", "", "", "", r.bw.mb_per_s,
                        r.bw.mib_per_s);
        } else {
            std::printf("%-6s %4d %6d %5d %4d %9.2f %9.2f\n", r.name.c_str(), r.spec.byte_depth, r.spec.height,
                        r.spec.width, r.spec.channels, r.bw.mb_per_s, r.bw.mib_per_s);
        }
        j["raw"][r.name] = {{"mb_per_s", r.bw.mb_per_s}, {"mib_per_s", r.bw.mib_per_s}};
    }
    if (!a.no_stream) {
        std::printf("\ncompressed stream, %d frames, JPEG q%d RGB\n%-22s %10s %10s %9s\n", a.frames, a.quality,
                    "depth container", "rgb B/fr", "depth B/fr", "MB/s");
        for (auto dc : {io::Container::kJpeg, io::Container::kPng}) {
            report::StreamOptions o;
            o.frames = a.frames;
            o.quality = a.quality;
            o.depth = dc;
            o.seed = g.seed_or(1);
            o.codec = p;
            const auto s = report::measure_compressed_stream(o);
            const char* name = dc == io::Container::kJpeg ? "jpeg" : "png";
            std::printf("%-22s %10.0f %10.0f %9.3f\n", name, s.rgb_bytes, s.depth_bytes, s.total_bw.mb_per_s);
            j["compressed"][name] = {{"rgb_mb_per_s", s.rgb_bw.mb_per_s},
                                     {"depth_mb_per_s", s.depth_bw.mb_per_s},
                                     {"total_mb_per_s", s.total_bw.mb_per_s}};
        }
    }
    std::ofstream(g.out("codec_report.json")) << j.dump(2) << '\n';
    return 0;
}

// ---- project ---------------------------------------------------------------

struct ProjectArgs {
    std::string rgb, depth, codec, out, mask;
    double dx = 0.0, dz = 0.0, dyaw = 0.0;
    double pitch = 5.0, fov_h = 87.0, fov_v = 0.0;
    int workers = 0;
    int radius = 5;
    bool no_inpaint = false;
};

int cmd_project(const Global& g, const ProjectArgs& a) {
    const auto rgb = io::read_rgb(a.rgb);
    const auto codes = io::read_codes(a.depth);
    if (rgb.width != codes.width || rgb.height != codes.height) {
        throw InvalidInput("dimension mismatch: rgb " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
                           ", depth " + std::to_string(codes.width) + "x" + std::to_string(codes.height));
    }
    sim::CameraModel cam;
    cam.width = rgb.width;
    cam.height = rgb.height;
    cam.fov_h = a.fov_h * kDeg;
    cam.fov_v = a.fov_v * kDeg;
    cam.validate();
    const auto dm = codec::decode_map(codes, codec_from(a.codec), cam.fov_h, cam.vertical_fov());

    motion::VehicleGeometry geom;
    geom.cam_pitch = a.pitch * kDeg;
    proj::ProjectOptions opts;
    opts.render.workers = a.workers;
    opts.inpaint_radius = a.radius;
    opts.fill_holes = !a.no_inpaint;
    const motion::PoseDelta delta{a.dx, a.dz, a.dyaw * kDeg};
    const auto r = proj::project_frame(rgb, dm, delta, geom, opts);

    const auto out = a.out.empty() ? g.out("projected.png") : fs::path(a.out);
    const auto mask = a.mask.empty() ? g.out("mask.png") : fs::path(a.mask);
    io::write_rgb(out.string(), r.image);
    std::vector<std::uint8_t> m = r.warped.valid_mask;
    if (r.passthrough) m.assign(r.image.pixel_count(), 1);
    io::write_mask(mask.string(), r.image.width, r.image.height, m);

    std::size_t valid = 0;
    for (auto v : m) valid += v ? 1 : 0;
    std::printf("passthrough %s\nvalid %.4f\nwarp_ms %.2f\ninpaint_ms %.2f\ntotal_ms %.2f\n",
                r.passthrough ? "yes" : "no", static_cast<double>(valid) / static_cast<double>(m.size()), r.warp_ms,
                r.inpaint_ms, r.warp_ms + r.inpaint_ms);
    logf(Level::kInfo, "wrote %s and %s", out.c_str(), mask.c_str());
    return 0;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
    std::string track = "r7_80";
    std::string scene;
    double s = 10.0;
    double lateral = 0.0;  // m, left positive
    double yaw = 0.0;      // deg, CCW
    int width = 672, height = 376;
    double pitch = 5.0, cam_height = 1.5;
    double move_dx = 0.0, move_dz = 0.0, move_dyaw = 0.0;
    int workers = 0;
};

int cmd_render(const Global& g, const RenderArgs& a) {
    const auto track = sim::Track::make(a.track);
    auto scene = a.scene.empty() ? sim::Scene::along_track(track, g.seed_or(1)) : sim::Scene::load(a.scene);
    if (a.s < 0.0 || a.s > track.length()) throw InvalidInput("--s outside the track");
    const auto c = track.point_at(a.s);
    const double h = track.heading_at(a.s);
    const motion::WorldPose axle{c.x - std::sin(h) * a.lateral, c.y + std::cos(h) * a.lateral, h + a.yaw * kDeg};
    motion::VehicleGeometry geom;
    geom.cam_pitch = a.pitch * kDeg;
    sim::CameraModel cam;
    cam.width = a.width;
    cam.height = a.height;
    cam.validate();

    const auto pose = sim::camera_for(axle, geom, a.cam_height);
    const auto frame = sim::render(scene, pose, cam, a.workers);
    io::write_rgb(g.out("render_rgb.png").string(), frame.rgb);
    io::write_codes(g.out("render_depth.png").string(), codec::encode_map(frame.depth, {}));

    json j;
    j["track"] = a.track;
    j["camera"] = {{"x", pose.x}, {"y", pose.y}, {"height", pose.height}, {"heading", pose.heading},
                   {"pitch", pose.pitch}};
    j["fov_h_deg"] = cam.fov_h / kDeg;
    j["fov_v_deg"] = cam.vertical_fov() / kDeg;
    const motion::PoseDelta move{a.move_dx, a.move_dz, a.move_dyaw * kDeg};
    if (!move.is_zero()) {
        const auto moved = sim::move_camera(pose, move);
        io::write_rgb(g.out("render_truth.png").string(), sim::render(scene, moved, cam, a.workers).rgb);
        j["moved"] = {{"dx", move.dx}, {"dz", move.dz}, {"dyaw_deg", a.move_dyaw}};
    }
    std::ofstream(g.out("render.json")) << j.dump(2) << '\n';
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

// ---- experiment --------------------------------------------------------------

struct ExperimentArgs {
    std::string config;
    std::string mode;
    int laps = 0;
};

int cmd_experiment(const Global& g, const ExperimentArgs& a) {
    auto cfg = loop::ExperimentConfig::load(a.config);
    if (g.seed) cfg.seed = *g.seed;
    if (!a.mode.empty()) cfg.mode = loop::parse_mode(a.mode);
    if (a.laps > 0) cfg.laps = a.laps;
    cfg.validate();
    logf(Level::kInfo, "experiment %s: track %s, mode %s, %d lap(s), seed %llu", a.config.c_str(), cfg.track.c_str(),
         loop::mode_name(cfg.mode).c_str(), cfg.laps, static_cast<unsigned long long>(cfg.seed));
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = loop::run_experiment(cfg);
    result.write(g.out_dir);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("lap  done  duration_s  epsilon_m  max_dev_m  osc  estops  late\n");
    for (const auto& l : result.laps) {
        std::printf("%3d  %4s  %10.2f  %9.4f  %9.4f  %3d  %6d  %4zu\n", l.lap, l.completed ? "yes" : "no",
                    l.duration, l.epsilon, l.max_deviation, l.oscillations, l.estop_events, l.commands_late);
    }
    logf(Level::kInfo, "report in %s (%.2f s wall)", g.out_dir.c_str(), wall);
    return 0;
}

// ---- replay ----------------------------------------------------------------

struct ReplayArgs {
    std::string trace;
    std::string synthetic;
    int count = 3000;
    double period = 0.02;
    std::size_t window = 50;
    double refit = 1.0;
};

int cmd_replay(const Global& g, const ReplayArgs& a) {
    std::vector<delay::DelaySample> stream;
    if (!a.trace.empty()) {
        stream = delay::read_trace_csv(a.trace);
    } else {
        if (a.count <= 0 || !(a.period > 0.0)) throw InvalidInput("replay: need --count > 0 and --period > 0");
        const auto spec = loop::DelaySpec::parse(a.synthetic.empty() ? "gev 0.1 0.074512 0.008" : a.synthetic);
        auto src = spec.make(g.seed_or(1));
        for (int k = 0; k < a.count; ++k) stream.push_back({k * a.period, src()});
        delay::write_trace_csv(g.out("trace.csv").string(), stream);
    }
    if (stream.empty()) throw InvalidInput("replay: empty trace");
    const auto r = delay::replay_hold_and_apply(stream, a.window, a.refit);

    std::ofstream est(g.out("replay_estimates.csv"));
    est.precision(17);
    est << "t,p95,p999,xi,mu,sigma\n";
    for (const auto& e : r.estimates) {
        est << e.fitted_at << ',' << e.p95 << ',' << e.p999 << ',' << e.params.xi << ',' << e.params.mu << ','
            << e.params.sigma << '\n';
    }
    json j{{"commands", r.commands},         {"evaluated", r.evaluated},
           {"on_time", r.on_time},           {"on_time_rate", r.on_time_rate},
           {"p95_mean_ms", r.p95_mean * 1e3}, {"p95_jitter_ms", r.p95_jitter * 1e3},
           {"refits", r.estimates.size()},   {"window", a.window},
           {"refit_period", a.refit}};
    std::ofstream(g.out("replay.json")) << j.dump(2) << '\n';
    std::printf("commands %zu\non_time_rate %.4f\np95_mean_ms %.2f\np95_jitter_ms %.2f\nrefits %zu\n", r.commands,
                r.on_time_rate, r.p95_mean * 1e3, r.p95_jitter * 1e3, r.estimates.size());
    return 0;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string config;
    std::string static_dir;
    double pace = 1.0;
    int quality = 70;
    int width = 336, height = 188;
    bool no_render = false;
};

int cmd_serve(const Global& g, const ServeArgs& a) {
    serve::ServeOptions o;
    o.host = a.host;
    if (a.port < 0 || a.port > 65535) throw InvalidInput("--port out of range");
    o.port = static_cast<unsigned short>(a.port);
    o.static_dir = a.static_dir;
    o.out_dir = g.out_dir;
    o.pace = a.pace;
    o.jpeg_quality = a.quality;
    o.handle_signals = true;
    if (!a.config.empty()) {
        o.cfg = loop::ExperimentConfig::load(a.config);
    } else {
        o.cfg.render_width = a.width;
        o.cfg.render_height = a.height;
    }
    o.cfg.render = !a.no_render;
    if (g.seed) o.cfg.seed = *g.seed;
    serve::ConsoleServer server(o);
    const auto port = server.start();
    logf(Level::kInfo, "serving on http://%s:%u (websocket /ws, health /health); Ctrl-C to stop", a.host.c_str(),
         static_cast<unsigned>(port));
    server.run();
    logf(Level::kInfo, "stopped at t=%.2f s; report in %s", server.sim_time(), g.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictive display toolkit: depth codec, delay model, projection, closed-loop simulation"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--seed", g.seed, "Seed override for every random source");
    app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
    app.set_version_flag("--version", std::string(PPD_VERSION));
    app.footer("Verbosity: PP_LOG=error|warn|info|debug");

    CodecReportArgs cr;
    auto* c_cr = app.add_subcommand("codec-report", "Depth code curve, quantization step and bandwidth tables");
    c_cr->add_option("--codec", cr.codec, "Codec parameter file (a, c, d_min, d_max, overflow_mode)");
    c_cr->add_option("--from", cr.from, "Sweep start, m")->capture_default_str();
    c_cr->add_option("--to", cr.to, "Sweep end, m")->capture_default_str();
    c_cr->add_option("--step", cr.step, "Sweep step, m")->capture_default_str();
    c_cr->add_option("--csv", cr.csv, "Curve CSV path (default <out-dir>/codec_curve.csv)");
    c_cr->add_option("--frames", cr.frames, "Frames in the compressed-stream measurement")->capture_default_str();
    c_cr->add_option("--quality", cr.quality, "JPEG quality")->capture_default_str();
    c_cr->add_flag("--no-stream", cr.no_stream, "Skip the compressed-stream measurement");

    ProjectArgs pa;
    auto* c_pr = app.add_subcommand("project", "Warp one frame to a displaced camera");
    c_pr->add_option("--rgb", pa.rgb, "RGB image (PNG or JPEG)")->required();
    c_pr->add_option("--depth", pa.depth, "8-bit encoded depth image (PNG)")->required();
    c_pr->add_option("--dx", pa.dx, "Lateral camera displacement, m, right positive")->capture_default_str();
    c_pr->add_option("--dz", pa.dz, "Forward camera displacement, m")->capture_default_str();
    c_pr->add_option("--dyaw", pa.dyaw, "Yaw change, deg, right turn positive")->capture_default_str();
    c_pr->add_option("--pitch", pa.pitch, "Camera pitch, deg, downward positive")->capture_default_str();
    c_pr->add_option("--fov-h", pa.fov_h, "Horizontal field of view, deg")->capture_default_str();
    c_pr->add_option("--fov-v", pa.fov_v, "Vertical field of view, deg (0 = square pixels)")->capture_default_str();
    c_pr->add_option("--codec", pa.codec, "Codec parameter file");
    c_pr->add_option("--out", pa.out, "Output PNG (default <out-dir>/projected.png)");
    c_pr->add_option("--mask", pa.mask, "Validity mask PNG (default <out-dir>/mask.png)");
    c_pr->add_option("--workers", pa.workers, "Worker threads, 0 = all cores")->capture_default_str();
    c_pr->add_option("--radius", pa.radius, "Inpainting radius, px")->capture_default_str();
    c_pr->add_flag("--no-inpaint", pa.no_inpaint, "Leave holes black");

    RenderArgs ra;
    auto* c_rn = app.add_subcommand("render", "Render RGB and encoded depth from the synthetic world");
    c_rn->add_option("--track", ra.track, "r7_80, r5_120 or lane_change")->capture_default_str();
    c_rn->add_option("--scene", ra.scene, "Scene file (default: seeded roadside scene)");
    c_rn->add_option("--s", ra.s, "Arc length along the track of the rear axle, m")->capture_default_str();
    c_rn->add_option("--lateral", ra.lateral, "Offset from the centerline, m, left positive")->capture_default_str();
    c_rn->add_option("--yaw", ra.yaw, "Heading offset, deg, counterclockwise")->capture_default_str();
    c_rn->add_option("--width", ra.width)->capture_default_str();
    c_rn->add_option("--height", ra.height)->capture_default_str();
    c_rn->add_option("--pitch", ra.pitch, "Camera pitch, deg")->capture_default_str();
    c_rn->add_option("--cam-height", ra.cam_height, "Camera height, m")->capture_default_str();
    c_rn->add_option("--move-dx", ra.move_dx, "Also render the view after this camera move (m)");
    c_rn->add_option("--move-dz", ra.move_dz, "Forward part of the move, m");
    c_rn->add_option("--move-dyaw", ra.move_dyaw, "Yaw part of the move, deg, right positive");
    c_rn->add_option("--workers", ra.workers)->capture_default_str();

    ExperimentArgs ea;
    auto* c_ex = app.add_subcommand("experiment", "Run a headless closed-loop experiment");
    c_ex->add_option("config", ea.config, "Experiment config file")->required();
    c_ex->add_option("--mode", ea.mode, "Override: in_vehicle, teleop_pp, teleop_nopp");
    c_ex->add_option("--laps", ea.laps, "Override the lap count");

    ReplayArgs rp;
    auto* c_rp = app.add_subcommand("replay", "Replay a delay trace through fitting and hold-and-apply");
    auto* o_trace = c_rp->add_option("trace", rp.trace, "timestamp_s,delay_s CSV");
    c_rp->add_option("--synthetic", rp.synthetic, "Delay law instead of a trace, e.g. \"gev 0.1 0.0745 0.008\"")
        ->excludes(o_trace);
    c_rp->add_option("--count", rp.count, "Synthetic command count")->capture_default_str();
    c_rp->add_option("--period", rp.period, "Synthetic command period, s")->capture_default_str();
    c_rp->add_option("--window", rp.window, "Delay window size")->capture_default_str();
    c_rp->add_option("--refit", rp.refit, "Refit period, s")->capture_default_str();

    ServeArgs sa;
    auto* c_sv = app.add_subcommand("serve", "Live simulation service for the operator console");
    c_sv->add_option("--host", sa.host)->capture_default_str();
    c_sv->add_option("--port", sa.port, "0 picks a free port")->capture_default_str();
    c_sv->add_option("--config", sa.config, "Experiment config for the live vehicle");
    c_sv->add_option("--static-dir", sa.static_dir, "Console asset bundle served under /");
    c_sv->add_option("--pace", sa.pace, "Simulated seconds per wall second")->capture_default_str();
    c_sv->add_option("--quality", sa.quality, "JPEG quality of streamed frames")->capture_default_str();
    c_sv->add_option("--width", sa.width, "Render width without --config")->capture_default_str();
    c_sv->add_option("--height", sa.height, "Render height without --config")->capture_default_str();
    c_sv->add_flag("--no-render", sa.no_render, "Stream frame metadata only");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_cr->parsed()) return cmd_codec_report(g, cr);
        if (c_pr->parsed()) return cmd_project(g, pa);
        if (c_rn->parsed()) return cmd_render(g, ra);
        if (c_ex->parsed()) return cmd_experiment(g, ea);
        if (c_rp->parsed()) return cmd_replay(g, rp);
        if (c_sv->parsed()) return cmd_serve(g, sa);
    } catch (const InvalidInput& e) {
        logf(Level::kError, "%s", e.what());
        return 2;
    } catch (const DecodeError& e) {
        logf(Level::kError, "%s", e.what());
        return 2;
    } catch (const std::exception& e) {
        logf(Level::kError, "%s", e.what());
        return 1;
    }
    return 0;
}
