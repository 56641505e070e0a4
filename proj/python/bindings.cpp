#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "ppd/codec_report.hpp"
#include "ppd/delay_model.hpp"
#include "ppd/depth_codec.hpp"
#include "ppd/error.hpp"
#include "ppd/motion_predictor.hpp"
#include "ppd/projection.hpp"
#include "ppd/sim_world.hpp"
#include "ppd/teleop_loop.hpp"

namespace py = pybind11;
using namespace ppd;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

RgbImage to_rgb(const U8Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidInput("rgb must be an HxWx3 uint8 array");
    RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.data.data(), a.data(), img.data.size());
    return img;
}

U8Array from_rgb(const RgbImage& img) {
    U8Array a({img.height, img.width, 3});
    std::memcpy(a.mutable_data(), img.data.data(), img.data.size());
    return a;
}

DepthMap to_depth(const F32Array& a, double fov_h, double fov_v) {
    if (a.ndim() != 2) throw InvalidInput("depth must be an HxW float32 array");
    DepthMap dm(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), fov_h, fov_v);
    std::memcpy(dm.data.data(), a.data(), dm.data.size() * sizeof(float));
    return dm;
}

F32Array from_depth(const DepthMap& dm) {
    F32Array a({dm.height, dm.width});
    std::memcpy(a.mutable_data(), dm.data.data(), dm.data.size() * sizeof(float));
    return a;
}

U8Array from_mask(const std::vector<std::uint8_t>& m, int w, int h) {
    U8Array a({h, w});
    std::memcpy(a.mutable_data(), m.data(), m.size());
    return a;
}

codec::CodecParams codec_params(double a, double c) {
    codec::CodecParams p;
    p.a = a;
    p.c = c;
    p.validate();
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Predictive display core: depth codec, delay model, motion forecast, projection, simulation.";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);

    // Depth codec.
    m.def("encode_depth", [](double d, double a, double c) { return codec::encode_depth(d, codec_params(a, c)); },
          py::arg("depth"), py::arg("a") = codec::CodecParams{}.a, py::arg("c") = codec::CodecParams{}.c);
    m.def("decode_depth", [](int code, double a, double c) {
        if (code < 0 || code > 255) throw InvalidInput("code must be in [0, 255]");
        return codec::decode_depth(static_cast<std::uint8_t>(code), codec_params(a, c));
    }, py::arg("code"), py::arg("a") = codec::CodecParams{}.a, py::arg("c") = codec::CodecParams{}.c);
    m.def("quantization_step", [](double d) { return codec::quantization_step(d, {}); }, py::arg("depth"));
    m.def("encode_map", [](const F32Array& depth) {
        const auto e = codec::encode_map(to_depth(depth, 0.0, 0.0), {});
        return from_mask(e.codes, e.width, e.height);
    }, py::arg("depth"), "HxW float32 metres to HxW uint8 codes.");
    m.def("decode_map", [](const U8Array& codes) {
        if (codes.ndim() != 2) throw InvalidInput("codes must be an HxW uint8 array");
        codec::EncodedDepthMap e{static_cast<int>(codes.shape(1)), static_cast<int>(codes.shape(0)), {}};
        e.codes.assign(codes.data(), codes.data() + codes.size());
        return from_depth(codec::decode_map(e, {}));
    }, py::arg("codes"));
    m.def("bandwidth", [](int width, int height, double fps) {
        py::dict out;
        for (const auto& r : report::raw_bandwidth(width, height, fps))
            out[py::str(r.name)] = py::make_tuple(r.bw.mb_per_s, r.bw.mib_per_s);
        return out;
    }, py::arg("width") = 672, py::arg("height") = 376, py::arg("fps") = 30.0,
          "Raw stream rows as {name: (MB/s, MiB/s)}.");

    // Delay model.
    py::class_<delay::GevParams>(m, "GevParams")
        .def(py::init([](double xi, double mu, double sigma) { return delay::GevParams{xi, mu, sigma}; }),
             py::arg("xi") = 0.1, py::arg("mu") = 0.0, py::arg("sigma") = 0.001)
        .def_readwrite("xi", &delay::GevParams::xi)
        .def_readwrite("mu", &delay::GevParams::mu)
        .def_readwrite("sigma", &delay::GevParams::sigma)
        .def("__repr__", [](const delay::GevParams& p) {
            return "GevParams(xi=" + std::to_string(p.xi) + ", mu=" + std::to_string(p.mu) +
                   ", sigma=" + std::to_string(p.sigma) + ")";
        });
    m.def("gev_cdf", &delay::gev_cdf, py::arg("t"), py::arg("params"));
    m.def("gev_pdf", &delay::gev_pdf, py::arg("t"), py::arg("params"));
    m.def("gev_quantile", &delay::gev_quantile, py::arg("prob"), py::arg("params"));
    m.def("gev_sample", [](const delay::GevParams& p, std::size_t n, std::uint64_t seed) {
        delay::GevSampler draw(p, seed);
        std::vector<double> out(n);
        for (auto& x : out) x = draw();
        return out;
    }, py::arg("params"), py::arg("n"), py::arg("seed") = 1);
    m.def("fit_gev", [](const std::vector<double>& xs) { return delay::fit_gev(xs).params; }, py::arg("samples"));
    m.def("hold_and_apply", [](const std::vector<double>& delays, double period, std::size_t window,
                               double refit) {
        std::vector<delay::DelaySample> stream(delays.size());
        for (std::size_t i = 0; i < delays.size(); ++i) stream[i] = {period * static_cast<double>(i), delays[i]};
        const auto r = delay::replay_hold_and_apply(stream, window, refit);
        py::dict out;
        out["on_time_rate"] = r.on_time_rate;
        out["evaluated"] = r.evaluated;
        out["p95_mean"] = r.p95_mean;
        out["p95_jitter"] = r.p95_jitter;
        return out;
    }, py::arg("delays"), py::arg("period") = 0.02, py::arg("window") = 50, py::arg("refit") = 1.0,
          "Replays one command per period with the given delays.");
    m.def("watchdog_trips", [](double last_cmd, double now, double p999) {
        delay::PercentileEstimate e;
        e.p999 = p999;
        return delay::watchdog_check(last_cmd, now, e) == delay::WatchdogState::kEmergencyStop;
    }, py::arg("last_cmd"), py::arg("now"), py::arg("p999"));

    // Motion forecast.
    m.def("integrate", [](const std::vector<std::pair<double, double>>& program, double v0, double accel,
                          double wheelbase) {
        std::vector<motion::SteerSegment> segs;
        for (const auto& [steer, dt] : program) segs.push_back({steer, dt});
        motion::VehicleGeometry g;
        g.wheelbase = wheelbase;
        const auto p = motion::integrate_trajectory(segs, v0, accel, g);
        return py::make_tuple(p.x, p.z, p.psi);
    }, py::arg("program"), py::arg("v0"), py::arg("accel") = 0.0, py::arg("wheelbase") = 1.76,
          "Rear-axle (x, z, psi) after a list of (steer rad, dt s); steer and psi are right positive.");

    // Projection.
    m.def("project_frame", [](const U8Array& rgb, const F32Array& depth, double dx, double dz, double dpsi,
                              double fov_h, double fov_v, double pitch, int workers, int radius, bool fill) {
        const auto img = to_rgb(rgb);
        if (fov_v <= 0.0) fov_v = sim::CameraModel{img.width, img.height, fov_h, 0.0}.vertical_fov();
        const auto dm = to_depth(depth, fov_h, fov_v);
        motion::VehicleGeometry g;
        g.cam_pitch = pitch;
        proj::ProjectOptions o;
        o.render.workers = workers;
        o.inpaint_radius = radius;
        o.fill_holes = fill;
        proj::ProjectResult r;
        {
            py::gil_scoped_release release;
            r = proj::project_frame(img, dm, {dx, dz, dpsi}, g, o);
        }
        py::dict out;
        out["image"] = from_rgb(r.image);
        out["valid"] = from_mask(r.warped.valid_mask, r.image.width, r.image.height);
        out["passthrough"] = r.passthrough;
        out["warp_ms"] = r.warp_ms;
        out["inpaint_ms"] = r.inpaint_ms;
        return out;
    }, py::arg("rgb"), py::arg("depth"), py::arg("dx") = 0.0, py::arg("dz") = 0.0, py::arg("dpsi") = 0.0,
          py::arg("fov_h") = 87.0 * 3.14159265358979323846 / 180.0, py::arg("fov_v") = 0.0,
          py::arg("pitch") = 5.0 * 3.14159265358979323846 / 180.0, py::arg("workers") = 0, py::arg("radius") = 5,
          py::arg("fill") = true);

    // Synthetic world.
    m.def("tracks", &sim::Track::names);
    m.def("render_track", [](const std::string& track, double s, int width, int height, std::uint64_t seed) {
        const auto t = sim::Track::make(track);
        const auto scene = sim::Scene::along_track(t, seed);
        const auto p = t.point_at(s);
        motion::VehicleGeometry g;
        g.cam_pitch = 5.0 * 3.14159265358979323846 / 180.0;
        sim::CameraModel cam;
        cam.width = width;
        cam.height = height;
        const auto f = sim::render(scene, sim::camera_for({p.x, p.y, t.heading_at(s)}, g, 1.5), cam);
        return py::make_tuple(from_rgb(f.rgb), from_depth(f.depth), f.depth.fov_h, f.depth.fov_v);
    }, py::arg("track"), py::arg("s"), py::arg("width") = 672, py::arg("height") = 376, py::arg("seed") = 1,
          "(rgb, depth, fov_h, fov_v) seen from the rear axle at arc length s.");

    // Closed loop.
    m.def("run_experiment_json", [](const std::string& text) {
        const auto cfg = loop::ExperimentConfig::parse(text);
        py::gil_scoped_release release;
        return loop::run_experiment(cfg).report_json();
    }, py::arg("config_text"), "Runs an experiment from config text and returns the report JSON.");
}
