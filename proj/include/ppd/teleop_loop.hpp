#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppd/delay_model.hpp"
#include "ppd/depth_codec.hpp"
#include "ppd/image_io.hpp"
#include "ppd/motion_predictor.hpp"
#include "ppd/projection.hpp"
#include "ppd/sim_world.hpp"
#include "ppd/wire.hpp"

namespace ppd::loop {

using wire::Micros;

enum class Mode { kInVehicle, kTeleopPP, kTeleopNoPP };

std::string mode_name(Mode m);
/// Accepts in_vehicle, teleop_pp, teleop_nopp.
Mode parse_mode(const std::string& s);

/// One link's delay law. Text forms: `constant 0.05`, `gev xi mu sigma`,
/// `trace path.csv` (delay column of a timestamp_s,delay_s file).
struct DelaySpec {
    enum class Kind { kConstant, kGev, kTrace };
    Kind kind = Kind::kConstant;
    double constant = 0.0;
    delay::GevParams gev{};
    std::vector<double> trace;

    static DelaySpec parse(const std::string& text);
    wire::DelaySource make(std::uint64_t seed) const;
    double mean() const;
    std::string describe() const;
};

/// Default split of a 250 ms mean round trip into GEV downlink and uplink laws.
DelaySpec default_downlink();
DelaySpec default_uplink();

struct ExperimentConfig {
    std::string track = "r7_80";
    Mode mode = Mode::kTeleopPP;
    double speed_kmh = 10.0;
    int laps = 1;
    double max_lap_time = 90.0;  ///< s; a lap that does not finish is reported incomplete
    double warmup = 2.0;         ///< s parked at the start while the link and estimator settle
    std::uint64_t seed = 1;
    double slip = 1.0;           ///< plant curvature scaling; the predictor always assumes 1
    DelaySpec downlink = default_downlink();
    DelaySpec uplink = default_uplink();
    double reaction = 0.150;     ///< operator reaction delay, s
    double lookahead = 3.0;      ///< pure-pursuit lookahead, m
    double frame_rate = 30.0;
    double command_rate = 50.0;
    double refit_period = 1.0;
    std::size_t delay_window = 50;
    bool watchdog = true;  ///< teleop modes only
    double estop_decel = 3.0;
    double cruise_accel = 1.0;
    double sample_period = 0.01;  ///< pose log / deviation sampling
    double gps_offset = 0.8;      ///< deviation point ahead of the front axle
    motion::VehicleGeometry geom{1.76, 0.8, 0.0872664626};
    double cam_height = 1.5;
    std::vector<motion::TimeSection> sections;  ///< simulation-clock windows for prediction error

    // Pixel pipeline; off for headless metric runs.
    bool render = false;
    int render_width = 672;
    int render_height = 376;
    std::string scene;  ///< scene file; empty = seeded roadside scene along the track
    int workers = 0;
    io::Container rgb_container = io::Container::kJpeg;
    io::Container depth_container = io::Container::kPng;
    int jpeg_quality = 80;
    codec::CodecParams codec{};

    double target_speed() const { return speed_kmh / 3.6; }
    void validate() const;
    static ExperimentConfig parse(const std::string& text, const std::string& base_dir = ".");
    static ExperimentConfig load(const std::string& path);
};

struct PoseSample {
    double t = 0.0;
    motion::WorldPose pose;
    double speed = 0.0;
    double steer = 0.0;
    double deviation = 0.0;      ///< distance of the deviation point to the centerline
    double signed_offset = 0.0;  ///< positive left
    bool estop = false;
};

struct FrameRecord {
    std::uint64_t seq = 0;
    double t0 = 0.0;
    double t1 = 0.0;
    double p95 = 0.0;
    double p999 = 0.0;
    motion::PoseDelta camera;
    motion::WorldPose captured;
    motion::WorldPose predicted;  ///< forecast pose for t1 + p95
    motion::WorldPose shown;      ///< pose implied by the display
    bool stale = false;
};

struct CommandRecord {
    double ts = 0.0;
    double steer = 0.0;
    double p95 = 0.0;
    double p999 = 0.0;
    double arrival = -1.0;
    double due = 0.0;
    double applied = -1.0;  ///< -1 if superseded before actuation
    bool late = false;
    bool fitted = false;  ///< p95/p999 came from a fitted estimate
};

struct EstimateRecord {
    double t = 0.0;
    double p95 = 0.0;
    double p999 = 0.0;
};

/// What the station puts on screen for one frame.
struct DisplayEvent {
    double t = 0.0;  ///< station time of display
    const FrameRecord* record = nullptr;
    const RgbImage* image = nullptr;  ///< null when rendering is off
    bool passthrough = false;
    double warp_ms = 0.0;
    double inpaint_ms = 0.0;
};

struct Stats {
    std::size_t count = 0;
    double mean = 0.0;
    double p95 = 0.0;
    double max = 0.0;

    static Stats of(std::vector<double> v);
};

struct LapResult {
    int lap = 0;
    std::uint64_t seed = 0;
    bool completed = false;
    double duration = 0.0;
    double epsilon = 0.0;  ///< RMS deviation over n_gps samples
    std::size_t n_gps = 0;
    double max_deviation = 0.0;
    int oscillations = 0;
    std::vector<motion::PredictionError> prediction;  ///< one per section (whole lap if none)
    Stats downlink, uplink, displayed_latency;
    std::size_t commands_sent = 0;
    std::size_t commands_received = 0;
    std::size_t commands_late = 0;
    std::size_t frames_sent = 0;
    std::size_t frames_displayed = 0;
    std::size_t frames_stale = 0;
    int estop_events = 0;
    double estop_time = 0.0;
};

/// Wall-clock costs; kept apart from the deterministic report.
struct TimingStats {
    Stats warp_ms, inpaint_ms, total_ms;
    std::size_t budget_overruns = 0;
};

struct LapLogs {
    std::vector<PoseSample> poses;
    std::vector<FrameRecord> frames;
    std::vector<CommandRecord> commands;
    std::vector<EstimateRecord> estimates;
    std::vector<double> uplink_delays;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<LapResult> laps;
    std::vector<LapLogs> logs;
    TimingStats timing;

    double epsilon() const;  ///< over all laps' samples
    std::string report_json() const;
    /// report.json, timing.json, poses.csv, frames.csv, commands.csv, estimates.csv.
    void write(const std::string& out_dir) const;
};

/// Pure pursuit on the centerline from a given rear-axle pose.
class ScriptedOperator {
public:
    ScriptedOperator(const sim::Track& track, const motion::VehicleGeometry& geom, double lookahead);
    double steer(const motion::WorldPose& axle) const;

private:
    const sim::Track* track_;
    motion::VehicleGeometry geom_;
    double lookahead_;
};

/// Steppable closed loop: vehicle node, two delayed channels and the station.
/// Single-threaded, driven by an integer microsecond clock.
class Simulation {
public:
    Simulation(const ExperimentConfig& cfg, std::uint64_t seed);
    ~Simulation();

    /// Advances the clock by one millisecond.
    void step();
    Micros now() const { return now_; }
    double time() const { return wire::to_seconds(now_); }
    /// True once the deviation point passes the end of the track.
    bool finished() const { return finished_; }

    Mode mode() const { return mode_; }
    /// Switches between teleop_pp and teleop_nopp at runtime; in_vehicle is fixed at construction.
    void set_mode(Mode m);
    /// Overrides the scripted operator (live console); nullopt restores it.
    void set_external_steer(std::optional<double> steer);
    /// While paused the station sends no commands (a console that went
    /// silent); the vehicle watchdog takes it from there.
    void set_uplink_paused(bool paused) { uplink_paused_ = paused; }
    bool uplink_paused() const { return uplink_paused_; }

    void on_display(std::function<void(const DisplayEvent&)> cb) { display_cb_ = std::move(cb); }

    const sim::PlantState& plant() const { return plant_; }
    double applied_steer() const { return steer_; }
    bool estop() const { return estop_; }
    const delay::PercentileEstimate& estimate() const { return est_; }
    const sim::Track& track() const { return track_; }
    const LapLogs& logs() const { return logs_; }
    const TimingStats& timing() const { return timing_; }

    LapResult summarize(int lap) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;

    ExperimentConfig cfg_;
    std::uint64_t seed_;
    Mode mode_;
    sim::Track track_;
    ScriptedOperator operator_;
    Micros now_ = 0;
    bool finished_ = false;

    sim::PlantState plant_{};
    double steer_ = 0.0;
    double accel_ = 0.0;
    bool armed_ = false;  ///< parked until warm-up ends and a command has arrived
    bool heard_ = false;
    bool estop_ = false;
    int estop_events_ = 0;
    Micros estop_us_ = 0;
    Micros last_cmd_us_ = 0;
    double last_cmd_p999_ = delay::kMaxP999;

    delay::PercentileEstimate est_{};
    Micros last_fit_us_ = 0;
    motion::SteerHistory history_{5.0};
    std::optional<double> external_steer_;
    bool uplink_paused_ = false;
    std::deque<std::pair<Micros, motion::WorldPose>> seen_;  // operator perception, display order
    std::uint64_t last_seq_shown_ = 0;
    bool any_shown_ = false;

    std::size_t frames_sent_ = 0;
    std::size_t commands_sent_ = 0;
    std::uint64_t next_frame_ = 0;
    std::uint64_t next_command_ = 0;
    Micros next_sample_ = 0;

    LapLogs logs_;
    TimingStats timing_;
    std::vector<double> warp_ms_, inpaint_ms_, total_ms_;
    std::function<void(const DisplayEvent&)> display_cb_;

    void vehicle_receive();
    void vehicle_actuate();
    void vehicle_capture();
    void station_receive();
    void station_command();
    void log_sample();
};

/// Runs `cfg.laps` laps, lap i seeded from cfg.seed and i.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// RMS of deviations (the per-sample distances to the centerline).
double rms_deviation(const std::vector<double>& deviations);
/// Deviation of each point to the track, then RMS per time section.
/// Sections without samples are omitted from the result.
struct SectionRmse {
    motion::TimeSection section;
    double epsilon = 0.0;
    std::size_t n = 0;
};
std::vector<SectionRmse> compute_rmse(const std::vector<double>& times, const std::vector<sim::Vec2>& points,
                                      const sim::Track& track, const std::vector<motion::TimeSection>& sections);

/// Counts sign reversals of `signed_offset` that cross from beyond +band to
/// beyond -band or back.
int count_oscillations(const std::vector<double>& signed_offset, double band = 0.05);

}  // namespace ppd::loop
