#include "ppd/teleop_loop.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ppd/config.hpp"
#include "ppd/error.hpp"

namespace ppd::loop {

using motion::WorldPose;
using nlohmann::ordered_json;

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::kInVehicle: return "in_vehicle";
        case Mode::kTeleopPP: return "teleop_pp";
        case Mode::kTeleopNoPP: return "teleop_nopp";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "in_vehicle") return Mode::kInVehicle;
    if (s == "teleop_pp") return Mode::kTeleopPP;
    if (s == "teleop_nopp") return Mode::kTeleopNoPP;
    throw InvalidInput("unknown mode '" + s + "' (in_vehicle | teleop_pp | teleop_nopp)");
}

// ---------------------------------------------------------------- delays

DelaySpec DelaySpec::parse(const std::string& text) {
    const auto f = split_fields(text);
    if (f.empty()) throw InvalidInput("empty delay spec");
    auto num = [&](std::size_t i) {
        if (i >= f.size()) throw InvalidInput("delay spec '" + text + "': missing value");
        try {
            return std::stod(f[i]);
        } catch (const std::exception&) {
            throw InvalidInput("delay spec '" + text + "': not a number: " + f[i]);
        }
    };
    DelaySpec d;
    if (f[0] == "constant") {
        d.kind = Kind::kConstant;
        d.constant = num(1);
        if (!(d.constant >= 0.0)) throw InvalidInput("constant delay must be >= 0");
    } else if (f[0] == "gev") {
        d.kind = Kind::kGev;
        d.gev = {num(1), num(2), num(3)};
        if (!(d.gev.sigma > 0.0) || !(d.gev.xi < 1.0)) throw InvalidInput("gev delay needs sigma > 0 and xi < 1");
    } else if (f[0] == "trace") {
        if (f.size() < 2) throw InvalidInput("trace delay needs a file path");
        d.kind = Kind::kTrace;
        for (const auto& row : delay::read_trace_csv(f[1])) d.trace.push_back(row.delay);
        if (d.trace.empty()) throw InvalidInput("trace file has no rows: " + f[1]);
    } else {
        throw InvalidInput("unknown delay kind '" + f[0] + "' (constant | gev | trace)");
    }
    return d;
}

wire::DelaySource DelaySpec::make(std::uint64_t seed) const {
    switch (kind) {
        case Kind::kConstant: return wire::constant_delay(constant);
        case Kind::kGev: return wire::gev_delay(gev, seed);
        case Kind::kTrace: return wire::trace_delay(trace);
    }
    return wire::constant_delay(0.0);
}

double DelaySpec::mean() const {
    switch (kind) {
        case Kind::kConstant: return constant;
        case Kind::kGev: return delay::gev_mean(gev);
        case Kind::kTrace: {
            double s = 0.0;
            for (double v : trace) s += v;
            return s / static_cast<double>(trace.size());
        }
    }
    return 0.0;
}

std::string DelaySpec::describe() const {
    std::ostringstream os;
    os << std::setprecision(6);
    switch (kind) {
        case Kind::kConstant: os << "constant " << constant; break;
        case Kind::kGev: os << "gev " << gev.xi << ' ' << gev.mu << ' ' << gev.sigma; break;
        case Kind::kTrace: os << "trace (" << trace.size() << " rows)"; break;
    }
    return os.str();
}

// Means 0.170 s down and 0.080 s up: 250 ms round trip.
DelaySpec default_downlink() {
    DelaySpec d;
    d.kind = DelaySpec::Kind::kGev;
    d.gev = {0.1, 0.159709, 0.015};
    return d;
}

DelaySpec default_uplink() {
    DelaySpec d;
    d.kind = DelaySpec::Kind::kGev;
    d.gev = {0.1, 0.074512, 0.008};
    return d;
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
    sim::Track::make(track, 0.5);
    geom.validate();
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string(name) + " must be > 0");
    };
    positive(speed_kmh, "speed_kmh");
    positive(max_lap_time, "max_lap_time");
    positive(lookahead, "lookahead");
    positive(frame_rate, "frame_rate");
    positive(command_rate, "command_rate");
    positive(refit_period, "refit_period");
    positive(estop_decel, "estop_decel");
    positive(cruise_accel, "cruise_accel");
    positive(sample_period, "sample_period");
    positive(cam_height, "cam_height");
    positive(slip, "slip");
    if (laps < 1) throw InvalidInput("laps must be >= 1");
    if (reaction < 0.0) throw InvalidInput("reaction must be >= 0");
    if (!(warmup >= 0.0)) throw InvalidInput("warmup must be >= 0");
    if (delay_window < delay::kMinFitSamples) throw InvalidInput("delay_window must be >= 20");
    if (render && (render_width < 8 || render_height < 8)) throw InvalidInput("render size too small");
    for (const auto& s : sections) {
        if (!(s.begin < s.end)) throw InvalidInput("section needs begin < end");
    }
    codec.validate();
}

namespace {

io::Container parse_container(const std::string& s) {
    if (s == "jpeg" || s == "jpg") return io::Container::kJpeg;
    if (s == "png") return io::Container::kPng;
    throw InvalidInput("unknown container '" + s + "' (jpeg | png)");
}

std::string resolve(const std::string& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(base) / path).string();
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& base_dir) {
    const auto kv = KeyValueConfig::parse(text);
    kv.require_known({"track", "mode", "speed_kmh", "laps", "max_lap_time", "warmup", "seed", "slip", "downlink", "uplink",
                      "reaction", "lookahead", "frame_rate", "command_rate", "refit_period", "delay_window",
                      "watchdog", "estop_decel", "cruise_accel", "sample_period", "gps_offset", "wheelbase", "cam_offset",
                      "cam_pitch_deg", "cam_height", "section", "render", "render_width", "render_height", "scene",
                      "workers", "rgb_container", "depth_container", "jpeg_quality", "codec"});
    ExperimentConfig c;
    c.track = kv.get_string("track", c.track);
    c.mode = parse_mode(kv.get_string("mode", mode_name(c.mode)));
    c.speed_kmh = kv.get_double("speed_kmh", c.speed_kmh);
    c.laps = static_cast<int>(kv.get_int("laps", c.laps));
    c.max_lap_time = kv.get_double("max_lap_time", c.max_lap_time);
    c.warmup = kv.get_double("warmup", c.warmup);
    const long seed = kv.get_int("seed", static_cast<long>(c.seed));
    if (seed < 0) throw InvalidInput("seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    c.slip = kv.get_double("slip", c.slip);
    if (kv.has("downlink")) {
        auto spec = kv.get_string("downlink", "");
        if (spec.rfind("trace", 0) == 0) spec = "trace " + resolve(base_dir, split_fields(spec).at(1));
        c.downlink = DelaySpec::parse(spec);
    }
    if (kv.has("uplink")) {
        auto spec = kv.get_string("uplink", "");
        if (spec.rfind("trace", 0) == 0) spec = "trace " + resolve(base_dir, split_fields(spec).at(1));
        c.uplink = DelaySpec::parse(spec);
    }
    c.reaction = kv.get_double("reaction", c.reaction);
    c.lookahead = kv.get_double("lookahead", c.lookahead);
    c.frame_rate = kv.get_double("frame_rate", c.frame_rate);
    c.command_rate = kv.get_double("command_rate", c.command_rate);
    c.refit_period = kv.get_double("refit_period", c.refit_period);
    c.delay_window = static_cast<std::size_t>(std::max(0L, kv.get_int("delay_window", static_cast<long>(c.delay_window))));
    c.watchdog = kv.get_bool("watchdog", c.watchdog);
    c.estop_decel = kv.get_double("estop_decel", c.estop_decel);
    c.cruise_accel = kv.get_double("cruise_accel", c.cruise_accel);
    c.sample_period = kv.get_double("sample_period", c.sample_period);
    c.gps_offset = kv.get_double("gps_offset", c.gps_offset);
    c.geom.wheelbase = kv.get_double("wheelbase", c.geom.wheelbase);
    c.geom.cam_offset = kv.get_double("cam_offset", c.geom.cam_offset);
    if (kv.has("cam_pitch_deg")) c.geom.cam_pitch = kv.get_double("cam_pitch_deg", 0.0) * std::numbers::pi / 180.0;
    c.cam_height = kv.get_double("cam_height", c.cam_height);
    for (const auto& s : kv.get_all("section")) {
        const auto f = split_fields(s);
        if (f.size() != 2) throw InvalidInput("section expects 'begin end' in seconds");
        c.sections.push_back({std::stod(f[0]), std::stod(f[1])});
    }
    c.render = kv.get_bool("render", c.render);
    c.render_width = static_cast<int>(kv.get_int("render_width", c.render_width));
    c.render_height = static_cast<int>(kv.get_int("render_height", c.render_height));
    if (kv.has("scene")) c.scene = resolve(base_dir, kv.get_string("scene", ""));
    c.workers = static_cast<int>(kv.get_int("workers", c.workers));
    c.rgb_container = parse_container(kv.get_string("rgb_container", "jpeg"));
    c.depth_container = parse_container(kv.get_string("depth_container", "png"));
    c.jpeg_quality = static_cast<int>(kv.get_int("jpeg_quality", c.jpeg_quality));
    if (kv.has("codec")) c.codec = codec::load_params(resolve(base_dir, kv.get_string("codec", "")));
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open experiment config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------- metrics

Stats Stats::of(std::vector<double> v) {
    Stats s;
    s.count = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
    s.p95 = v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
    s.max = v.back();
    return s;
}

double rms_deviation(const std::vector<double>& deviations) {
    if (deviations.empty()) throw InvalidInput("rms_deviation: no samples");
    double sum = 0.0;
    for (double d : deviations) sum += d * d;
    return std::sqrt(sum / static_cast<double>(deviations.size()));
}

std::vector<SectionRmse> compute_rmse(const std::vector<double>& times, const std::vector<sim::Vec2>& points,
                                      const sim::Track& track, const std::vector<motion::TimeSection>& sections) {
    if (times.size() != points.size()) throw InvalidInput("compute_rmse: times/points size mismatch");
    std::vector<motion::TimeSection> secs = sections;
    if (secs.empty()) secs.push_back({-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
    std::vector<double> dev(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) dev[i] = sim::deviation(points[i], track);
    std::vector<SectionRmse> out;
    for (const auto& s : secs) {
        std::vector<double> in;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] >= s.begin && times[i] <= s.end) in.push_back(dev[i]);
        }
        if (in.empty()) continue;
        out.push_back({s, rms_deviation(in), in.size()});
    }
    return out;
}

int count_oscillations(const std::vector<double>& signed_offset, double band) {
    int state = 0;  // side last seen beyond the band
    int flips = 0;
    for (double e : signed_offset) {
        const int side = e > band ? 1 : (e < -band ? -1 : 0);
        if (side == 0) continue;
        if (state != 0 && side != state) ++flips;
        state = side;
    }
    return flips;
}

// ---------------------------------------------------------------- operator

ScriptedOperator::ScriptedOperator(const sim::Track& track, const motion::VehicleGeometry& geom, double lookahead)
    : track_(&track), geom_(geom), lookahead_(lookahead) {}

double ScriptedOperator::steer(const WorldPose& axle) const {
    const auto near = track_->nearest({axle.x, axle.y});
    const double s = near.s + lookahead_;
    sim::Vec2 target;
    if (s <= track_->length()) {
        target = track_->point_at(s);
    } else {
        const auto end = track_->point_at(track_->length());
        const double h = track_->heading_at(track_->length());
        const double extra = s - track_->length();
        target = {end.x + extra * std::cos(h), end.y + extra * std::sin(h)};
    }
    const auto rel = motion::relative(axle, {target.x, target.y, 0.0});
    const double ld2 = rel.x * rel.x + rel.z * rel.z;
    if (ld2 < 1e-9) return 0.0;
    // Arc through the target; X and steer are both right-positive.
    const double curvature = 2.0 * rel.x / ld2;
    return std::clamp(std::atan(curvature * geom_.wheelbase), -motion::kMaxSteer, motion::kMaxSteer);
}

// ---------------------------------------------------------------- simulation

namespace {

constexpr Micros kTick = 1000;

struct DownPacket {
    wire::FrameMsg msg;
    WorldPose pose;
    std::vector<delay::DelaySample> telemetry;  // uplink delays observed since the last frame
};

struct UpPacket {
    wire::CommandMsg msg;
    std::size_t log_index = 0;
};

struct Held {
    Micros ts = 0;
    Micros due = 0;
    double steer = 0.0;
    std::size_t log_index = 0;
};

Micros schedule_at(std::uint64_t k, double rate) {
    return static_cast<Micros>(std::llround(static_cast<double>(k) * 1e6 / rate));
}

}  // namespace

struct Simulation::Impl {
    wire::DelayedChannel<DownPacket> down;
    wire::DelayedChannel<UpPacket> up;
    std::deque<Held> held;
    std::vector<delay::DelaySample> telemetry;
    delay::DelayWindow window;

    std::optional<sim::Scene> scene;
    sim::CameraModel camera;
    RgbImage shown_image;

    Impl(wire::DelaySource d, wire::DelaySource u, std::size_t window_size)
        : down(std::move(d)), up(std::move(u)), window(window_size) {}
};

Simulation::Simulation(const ExperimentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed), mode_(cfg.mode), track_(sim::Track::make(cfg.track)),
      operator_(track_, cfg.geom, cfg.lookahead) {
    cfg_.validate();
    const bool in_vehicle = mode_ == Mode::kInVehicle;
    // Independent streams per link: the seed picks the lap, the constant the link.
    auto down = in_vehicle ? wire::constant_delay(0.0) : cfg_.downlink.make(seed * 2654435761ULL + 1);
    auto up = in_vehicle ? wire::constant_delay(0.0) : cfg_.uplink.make(seed * 2654435761ULL + 2);
    impl_ = std::make_unique<Impl>(std::move(down), std::move(up), cfg_.delay_window);
    if (in_vehicle) est_.p95 = 0.0;
    if (cfg_.render) {
        impl_->scene = cfg_.scene.empty() ? sim::Scene::along_track(track_, cfg_.seed) : sim::Scene::load(cfg_.scene);
        if (!cfg_.scene.empty()) impl_->scene->paint_road(track_);
        impl_->camera.width = cfg_.render_width;
        impl_->camera.height = cfg_.render_height;
    }
}

Simulation::~Simulation() = default;

void Simulation::set_mode(Mode m) {
    if (mode_ == Mode::kInVehicle || m == Mode::kInVehicle) {
        if (m != mode_) throw InvalidInput("in_vehicle mode is fixed at construction");
        return;
    }
    mode_ = m;
}

void Simulation::set_external_steer(std::optional<double> steer) {
    if (steer && !std::isfinite(*steer)) throw InvalidInput("external steer must be finite");
    external_steer_ = steer;
}

void Simulation::step() {
    // Within a tick a zero-delay message is seen by its receiver in the same tick.
    vehicle_capture();
    station_receive();
    station_command();
    vehicle_receive();
    vehicle_actuate();
    log_sample();

    const double dt = wire::to_seconds(kTick);
    plant_ = sim::plant_step(plant_, steer_, accel_, dt, cfg_.geom, cfg_.slip);
    if (plant_.speed < 1e-9) plant_.speed = 0.0;
    if (estop_) estop_us_ += kTick;
    now_ += kTick;

    const auto fp = sim::forward_point(plant_, cfg_.geom, cfg_.gps_offset);
    if (armed_ && track_.nearest(fp).s >= track_.length() - 0.5) finished_ = true;
}

void Simulation::vehicle_receive() {
    for (auto& d : impl_->up.poll(now_)) {
        const auto& c = d.msg.msg;
        const Micros ts = static_cast<Micros>(c.ts_us);
        auto& rec = logs_.commands[d.msg.log_index];
        rec.arrival = wire::to_seconds(now_);
        // In the vehicle there is no link to hide: commands apply on arrival.
        const Micros due = mode_ == Mode::kInVehicle ? now_ : ts + wire::to_micros(c.p95);
        rec.due = wire::to_seconds(due);
        rec.late = now_ > due;
        const double delay = wire::to_seconds(now_ - ts);
        logs_.uplink_delays.push_back(delay);
        impl_->telemetry.push_back({wire::to_seconds(now_), delay});
        impl_->held.push_back({ts, due, c.steer, d.msg.log_index});
        if (!heard_ || ts > last_cmd_us_) {
            last_cmd_us_ = ts;
            last_cmd_p999_ = c.p999;
        }
        heard_ = true;
    }
    if (heard_ && now_ >= wire::to_micros(cfg_.warmup)) armed_ = true;
}

void Simulation::vehicle_actuate() {
    // Apply the newest due command; anything older is superseded.
    auto& held = impl_->held;
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < held.size(); ++i) {
        if (held[i].due <= now_) pick = i;
    }
    if (pick) {
        steer_ = held[*pick].steer;
        logs_.commands[held[*pick].log_index].applied = wire::to_seconds(now_);
        held.erase(held.begin(), held.begin() + static_cast<std::ptrdiff_t>(*pick) + 1);
    }

    if (armed_ && mode_ != Mode::kInVehicle && cfg_.watchdog) {
        delay::PercentileEstimate e;
        e.p999 = last_cmd_p999_;
        const bool trip = delay::watchdog_check(wire::to_seconds(last_cmd_us_), wire::to_seconds(now_), e) ==
                          delay::WatchdogState::kEmergencyStop;
        if (trip && !estop_) ++estop_events_;
        estop_ = trip;
    }

    const double dt = wire::to_seconds(kTick);
    if (!armed_) {
        accel_ = 0.0;
    } else if (estop_) {
        accel_ = -cfg_.estop_decel;
    } else {
        accel_ = std::clamp((cfg_.target_speed() - plant_.speed) / dt, -cfg_.estop_decel, cfg_.cruise_accel);
    }
}

void Simulation::vehicle_capture() {
    if (now_ < schedule_at(next_frame_, cfg_.frame_rate)) return;
    const std::uint64_t seq = next_frame_++;
    DownPacket p;
    p.msg.seq = seq;
    p.msg.t0_us = static_cast<std::uint64_t>(now_);
    p.msg.speed = static_cast<float>(plant_.speed);
    p.msg.accel = static_cast<float>(accel_);
    p.msg.pitch = static_cast<float>(cfg_.geom.cam_pitch);
    p.pose = plant_.pose;
    p.telemetry.swap(impl_->telemetry);
    if (cfg_.render) {
        const auto& cam = impl_->camera;
        p.msg.fov_h = static_cast<float>(cam.fov_h);
        p.msg.fov_v = static_cast<float>(cam.vertical_fov());
        auto pose = sim::camera_for(plant_.pose, cfg_.geom, cfg_.cam_height);
        const auto frame = sim::render(*impl_->scene, pose, cam, cfg_.workers);
        p.msg.rgb_payload = io::encode_rgb(frame.rgb, cfg_.rgb_container, cfg_.jpeg_quality);
        p.msg.depth_payload = io::encode_codes(codec::encode_map(frame.depth, cfg_.codec), cfg_.depth_container,
                                               cfg_.jpeg_quality);
    }
    ++frames_sent_;
    impl_->down.send(std::move(p), now_);
}

void Simulation::station_receive() {
    for (auto& d : impl_->down.poll(now_)) {
        const auto& m = d.msg.msg;
        const double t0 = m.t0();
        const double t1 = wire::to_seconds(now_);

        for (const auto& s : d.msg.telemetry) impl_->window.push(s.timestamp, s.delay);
        if (mode_ != Mode::kInVehicle && now_ - last_fit_us_ >= wire::to_micros(cfg_.refit_period)) {
            const auto prev = est_;
            est_ = delay::refresh_percentiles(impl_->window, t1, est_);
            if (est_.valid && (est_.fitted_at != prev.fitted_at)) {
                last_fit_us_ = now_;
                logs_.estimates.push_back({t1, est_.p95, est_.p999});
            }
        }

        FrameRecord rec;
        rec.seq = m.seq;
        rec.t0 = t0;
        rec.t1 = t1;
        rec.p95 = est_.p95;
        rec.p999 = est_.p999;
        rec.captured = d.msg.pose;
        rec.stale = any_shown_ && m.seq <= last_seq_shown_;
        if (rec.stale) {
            logs_.frames.push_back(rec);
            continue;
        }
        const auto fc = motion::forecast(t0, t1, history_, m.speed, m.accel, est_, cfg_.geom);
        rec.camera = fc.camera;
        rec.predicted = motion::compose(d.msg.pose, fc.axle);
        const bool pp = mode_ == Mode::kTeleopPP;
        rec.shown = pp ? rec.predicted : rec.captured;
        logs_.frames.push_back(rec);
        any_shown_ = true;
        last_seq_shown_ = m.seq;
        if (mode_ != Mode::kInVehicle) seen_.emplace_back(now_, rec.shown);

        DisplayEvent ev;
        ev.t = t1;
        ev.record = &logs_.frames.back();
        if (cfg_.render) {
            const auto rgb = io::decode_rgb(m.rgb_payload);
            if (pp) {
                const auto dm = codec::decode_map(io::decode_codes(m.depth_payload), cfg_.codec, m.fov_h, m.fov_v);
                proj::ProjectOptions opts;
                opts.render.workers = cfg_.workers;
                auto r = proj::project_frame(rgb, dm, rec.camera, cfg_.geom, opts);
                impl_->shown_image = std::move(r.image);
                ev.passthrough = r.passthrough;
                ev.warp_ms = r.warp_ms;
                ev.inpaint_ms = r.inpaint_ms;
                warp_ms_.push_back(r.warp_ms);
                inpaint_ms_.push_back(r.inpaint_ms);
                total_ms_.push_back(r.warp_ms + r.inpaint_ms);
                if (r.warp_ms + r.inpaint_ms > 1000.0 / cfg_.frame_rate) ++timing_.budget_overruns;
            } else {
                impl_->shown_image = rgb;
                ev.passthrough = true;
            }
            ev.image = &impl_->shown_image;
        }
        if (display_cb_) display_cb_(ev);
    }
}

void Simulation::station_command() {
    // A driver on board watches the road itself, not the 30 Hz camera.
    if (mode_ == Mode::kInVehicle) seen_.emplace_back(now_, plant_.pose);
    if (now_ < schedule_at(next_command_, cfg_.command_rate)) return;
    ++next_command_;
    if (uplink_paused_) return;

    double steer = 0.0;
    if (external_steer_) {
        steer = std::clamp(*external_steer_, -motion::kMaxSteer, motion::kMaxSteer);
    } else {
        const Micros cutoff = now_ - wire::to_micros(cfg_.reaction);
        while (seen_.size() > 1 && seen_[1].first <= cutoff) seen_.pop_front();
        if (!seen_.empty() && seen_.front().first <= cutoff) steer = operator_.steer(seen_.front().second);
    }

    const double ts = wire::to_seconds(now_);
    const double p95 = mode_ == Mode::kInVehicle ? 0.0 : est_.p95;
    const auto msg = wire::CommandMsg::make(steer, ts, p95, std::max(p95, est_.p999));
    history_.push(ts, steer);
    history_.prune(ts);
    CommandRecord rec;
    rec.ts = ts;
    rec.steer = steer;
    rec.p95 = msg.p95;
    rec.p999 = msg.p999;
    rec.fitted = est_.valid;
    logs_.commands.push_back(rec);
    ++commands_sent_;
    impl_->up.send(UpPacket{msg, logs_.commands.size() - 1}, now_);
}

void Simulation::log_sample() {
    if (now_ < next_sample_) return;
    next_sample_ += wire::to_micros(cfg_.sample_period);
    if (!armed_) return;
    PoseSample s;
    s.t = wire::to_seconds(now_);
    s.pose = plant_.pose;
    s.speed = plant_.speed;
    s.steer = steer_;
    s.estop = estop_;
    const auto near = track_.nearest(sim::forward_point(plant_, cfg_.geom, cfg_.gps_offset));
    s.deviation = near.distance;
    s.signed_offset = near.signed_offset;
    logs_.poses.push_back(s);
}

LapResult Simulation::summarize(int lap) const {
    LapResult r;
    r.lap = lap;
    r.seed = seed_;
    r.completed = finished_;
    r.duration = time() - cfg_.warmup;

    std::vector<double> dev, off;
    for (const auto& p : logs_.poses) {
        dev.push_back(p.deviation);
        off.push_back(p.signed_offset);
        r.max_deviation = std::max(r.max_deviation, p.deviation);
    }
    r.n_gps = dev.size();
    r.epsilon = dev.empty() ? 0.0 : rms_deviation(dev);
    r.oscillations = count_oscillations(off);

    // Prediction error: forecast pose for t1 + p95 against the realized pose then.
    std::vector<motion::TimedPose> realized;
    for (const auto& p : logs_.poses) realized.push_back({p.t, p.pose});
    std::vector<motion::PredictionSample> pred;
    std::vector<double> down, shown_latency;
    for (const auto& f : logs_.frames) {
        down.push_back(f.t1 - f.t0);
        if (f.stale) {
            ++r.frames_stale;
            continue;
        }
        ++r.frames_displayed;
        shown_latency.push_back(f.t1 - f.t0 + f.p95);
        pred.push_back({f.t1 + f.p95, f.predicted});
    }
    std::vector<motion::TimeSection> sections = cfg_.sections;
    if (sections.empty()) sections.push_back({cfg_.warmup, time()});
    for (const auto& s : sections) {
        try {
            const motion::TimeSection one[] = {s};
            r.prediction.push_back(motion::evaluate_prediction_error(pred, realized, one).front());
        } catch (const InvalidInput&) {
            r.prediction.push_back({});  // no overlapping samples
        }
    }

    r.downlink = Stats::of(down);
    r.uplink = Stats::of(logs_.uplink_delays);
    r.displayed_latency = Stats::of(shown_latency);
    r.commands_sent = commands_sent_;
    for (const auto& c : logs_.commands) {
        if (c.arrival < 0.0) continue;
        // Only commands stamped with a fitted estimate count toward the on-time rate.
        if (mode_ != Mode::kInVehicle && !c.fitted) continue;
        ++r.commands_received;
        if (c.late) ++r.commands_late;
    }
    r.frames_sent = frames_sent_;
    r.estop_events = estop_events_;
    r.estop_time = wire::to_seconds(estop_us_);
    return r;
}

// ---------------------------------------------------------------- experiment

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    std::vector<double> warp, inpaint, total;
    for (int lap = 1; lap <= cfg.laps; ++lap) {
        const std::uint64_t seed = cfg.seed * 1000 + static_cast<std::uint64_t>(lap);
        Simulation sim(cfg, seed);
        std::vector<double> w, ip, tot;
        sim.on_display([&](const DisplayEvent& e) {
            if (e.image && !e.passthrough) {
                w.push_back(e.warp_ms);
                ip.push_back(e.inpaint_ms);
                tot.push_back(e.warp_ms + e.inpaint_ms);
            }
        });
        const Micros limit = wire::to_micros(cfg.warmup + cfg.max_lap_time);
        while (!sim.finished() && sim.now() < limit) sim.step();
        res.laps.push_back(sim.summarize(lap));
        res.logs.push_back(sim.logs());
        res.timing.budget_overruns += sim.timing().budget_overruns;
        warp.insert(warp.end(), w.begin(), w.end());
        inpaint.insert(inpaint.end(), ip.begin(), ip.end());
        total.insert(total.end(), tot.begin(), tot.end());
    }
    res.timing.warp_ms = Stats::of(warp);
    res.timing.inpaint_ms = Stats::of(inpaint);
    res.timing.total_ms = Stats::of(total);
    return res;
}

double ExperimentResult::epsilon() const {
    std::vector<double> all;
    for (const auto& l : logs)
        for (const auto& p : l.poses) all.push_back(p.deviation);
    return all.empty() ? 0.0 : rms_deviation(all);
}

namespace {

ordered_json stats_json(const Stats& s) {
    return ordered_json{{"count", s.count}, {"mean", s.mean}, {"p95", s.p95}, {"max", s.max}};
}

}  // namespace

std::string ExperimentResult::report_json() const {
    const auto& c = config;
    ordered_json cfg{{"track", c.track},
                     {"mode", mode_name(c.mode)},
                     {"speed_kmh", c.speed_kmh},
                     {"laps", c.laps},
                     {"warmup", c.warmup},
                     {"seed", c.seed},
                     {"slip", c.slip},
                     {"downlink", c.downlink.describe()},
                     {"uplink", c.uplink.describe()},
                     {"mean_round_trip", c.mode == Mode::kInVehicle ? 0.0 : c.downlink.mean() + c.uplink.mean()},
                     {"reaction", c.reaction},
                     {"lookahead", c.lookahead},
                     {"watchdog", c.watchdog},
                     {"render", c.render}};
    ordered_json laps_json = ordered_json::array();
    for (const auto& l : laps) {
        ordered_json pred = ordered_json::array();
        const auto secs =
            c.sections.empty() ? std::vector<motion::TimeSection>{{c.warmup, c.warmup + l.duration}} : c.sections;
        for (std::size_t i = 0; i < l.prediction.size(); ++i) {
            const auto& p = l.prediction[i];
            pred.push_back({{"begin", secs[i].begin},
                            {"end", secs[i].end},
                            {"count", p.count},
                            {"rmse_lateral", p.rmse_lateral},
                            {"rmse_longitudinal", p.rmse_longitudinal},
                            {"rmse_yaw", p.rmse_yaw}});
        }
        laps_json.push_back(
            {{"lap", l.lap},
             {"seed", l.seed},
             {"completed", l.completed},
             {"duration", l.duration},
             {"epsilon", l.epsilon},
             {"n_gps", l.n_gps},
             {"max_deviation", l.max_deviation},
             {"oscillations", l.oscillations},
             {"prediction", pred},
             {"downlink_delay", stats_json(l.downlink)},
             {"uplink_delay", stats_json(l.uplink)},
             {"displayed_latency", stats_json(l.displayed_latency)},
             {"commands_sent", l.commands_sent},
             {"commands_counted", l.commands_received},
             {"commands_late", l.commands_late},
             {"late_rate", l.commands_received ? double(l.commands_late) / double(l.commands_received) : 0.0},
             {"frames_sent", l.frames_sent},
             {"frames_displayed", l.frames_displayed},
             {"frames_stale", l.frames_stale},
             {"estop_events", l.estop_events},
             {"estop_time", l.estop_time}});
    }
    ordered_json out{{"config", cfg}, {"epsilon", epsilon()}, {"laps", laps_json}};
    return out.dump(2) + "\n";
}

void ExperimentResult::write(const std::string& out_dir) const {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw InvalidInput("cannot write " + (dir / name).string());
        f << std::setprecision(9);
        return f;
    };
    {
        auto f = open("report.json");
        f << report_json();
    }
    {
        auto f = open("timing.json");
        ordered_json t{{"warp_ms", stats_json(timing.warp_ms)},
                       {"inpaint_ms", stats_json(timing.inpaint_ms)},
                       {"total_ms", stats_json(timing.total_ms)},
                       {"budget_overruns", timing.budget_overruns}};
        f << t.dump(2) << "\n";
    }
    {
        auto f = open("poses.csv");
        f << "lap,t,x,y,heading,speed,steer,deviation,signed_offset,estop\n";
        for (std::size_t l = 0; l < logs.size(); ++l)
            for (const auto& p : logs[l].poses)
                f << l + 1 << ',' << p.t << ',' << p.pose.x << ',' << p.pose.y << ',' << p.pose.heading << ','
                  << p.speed << ',' << p.steer << ',' << p.deviation << ',' << p.signed_offset << ','
                  << int(p.estop) << '\n';
    }
    {
        auto f = open("frames.csv");
        f << "lap,seq,t0,t1,tau1,p95,dx,dz,dpsi,pred_x,pred_y,pred_heading,stale\n";
        for (std::size_t l = 0; l < logs.size(); ++l)
            for (const auto& r : logs[l].frames)
                f << l + 1 << ',' << r.seq << ',' << r.t0 << ',' << r.t1 << ',' << r.t1 - r.t0 << ',' << r.p95
                  << ',' << r.camera.dx << ',' << r.camera.dz << ',' << r.camera.dpsi << ',' << r.predicted.x << ','
                  << r.predicted.y << ',' << r.predicted.heading << ',' << int(r.stale) << '\n';
    }
    {
        auto f = open("commands.csv");
        f << "lap,ts,steer,p95,p999,arrival,due,applied,late\n";
        for (std::size_t l = 0; l < logs.size(); ++l)
            for (const auto& c : logs[l].commands)
                f << l + 1 << ',' << c.ts << ',' << c.steer << ',' << c.p95 << ',' << c.p999 << ',' << c.arrival
                  << ',' << c.due << ',' << c.applied << ',' << int(c.late) << '\n';
    }
    {
        auto f = open("estimates.csv");
        f << "lap,t,p95,p999\n";
        for (std::size_t l = 0; l < logs.size(); ++l)
            for (const auto& e : logs[l].estimates) f << l + 1 << ',' << e.t << ',' << e.p95 << ',' << e.p999 << '\n';
    }
}

}  // namespace ppd::loop
