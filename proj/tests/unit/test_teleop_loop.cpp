#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ppd/image_io.hpp"
#include "ppd/teleop_loop.hpp"

using namespace ppd;
using namespace ppd::loop;

namespace {

// Distance to the polyline by checking every segment.
double brute_deviation(sim::Vec2 p, const sim::Track& t) {
    const auto& pts = t.points();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double ex = pts[i + 1].x - pts[i].x, ey = pts[i + 1].y - pts[i].y;
        const double len2 = ex * ex + ey * ey;
        double u = len2 > 0 ? ((p.x - pts[i].x) * ex + (p.y - pts[i].y) * ey) / len2 : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        best = std::min(best, std::hypot(p.x - pts[i].x - u * ex, p.y - pts[i].y - u * ey));
    }
    return best;
}

ExperimentConfig quick(const std::string& track, Mode m) {
    ExperimentConfig c;
    c.track = track;
    c.mode = m;
    c.seed = 4;
    return c;
}

}  // namespace

TEST(Rmse, PerfectTrackingIsZero) {
    const auto track = sim::Track::make("r7_80");
    std::vector<double> t;
    std::vector<sim::Vec2> p;
    for (int i = 0; i < 200; ++i) {
        t.push_back(i * 0.1);
        p.push_back(track.point_at(i * 0.25));
    }
    const auto r = compute_rmse(t, p, track, {});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_LT(r[0].epsilon, 1e-9);
    EXPECT_EQ(r[0].n, 200u);
}

TEST(Rmse, ConstantOffsetOnStraight) {
    const auto track = sim::Track::make("lane_change");
    std::vector<double> t;
    std::vector<sim::Vec2> p;
    for (int i = 0; i < 100; ++i) {
        t.push_back(i);
        p.push_back({0.1 * i, -0.3});  // first 10 m are straight along +x
    }
    EXPECT_NEAR(compute_rmse(t, p, track, {})[0].epsilon, 0.3, 1e-12);
}

TEST(Rmse, MatchesBruteForceAndSplitsSections) {
    const auto track = sim::Track::make("r5_120");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> s(0.0, track.length()), off(-0.8, 0.8);
    std::vector<double> t;
    std::vector<sim::Vec2> p;
    for (int i = 0; i < 400; ++i) {
        const auto q = track.point_at(s(rng));
        t.push_back(i * 0.05);
        p.push_back({q.x + off(rng), q.y + off(rng)});
    }
    const std::vector<motion::TimeSection> secs{{0.0, 5.0}, {5.0, 20.0}, {100.0, 110.0}};
    const auto r = compute_rmse(t, p, track, secs);
    ASSERT_EQ(r.size(), 2u);  // the empty third section is omitted
    for (const auto& sec : r) {
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] < sec.section.begin || t[i] > sec.section.end) continue;
            const double d = brute_deviation(p[i], track);
            sum += d * d;
            ++n;
        }
        EXPECT_EQ(sec.n, n);
        EXPECT_NEAR(sec.epsilon, std::sqrt(sum / n), 1e-9);
    }
}

TEST(Oscillations, HysteresisBand) {
    EXPECT_EQ(count_oscillations({0.0, 0.04, -0.04, 0.03, -0.02}), 0);
    EXPECT_EQ(count_oscillations({0.1, 0.0, -0.1}), 1);
    EXPECT_EQ(count_oscillations({0.1, -0.1, 0.1, -0.1}), 3);
    EXPECT_EQ(count_oscillations({-0.2, -0.01, -0.3}), 0);
    EXPECT_EQ(count_oscillations({}), 0);
}

TEST(Config, ParsesAndRejects) {
    const auto c = ExperimentConfig::parse(
        "track = r5_120\nmode = teleop_nopp\nspeed_kmh = 15\ndownlink = constant 0.2\n"
        "uplink = gev 0.1 0.05 0.01\nsection = 20 25\nsection = 25 30\nseed = 9\n");
    EXPECT_EQ(c.track, "r5_120");
    EXPECT_EQ(c.mode, Mode::kTeleopNoPP);
    EXPECT_DOUBLE_EQ(c.target_speed(), 15 / 3.6);
    EXPECT_EQ(c.downlink.kind, DelaySpec::Kind::kConstant);
    EXPECT_DOUBLE_EQ(c.downlink.mean(), 0.2);
    EXPECT_EQ(c.uplink.kind, DelaySpec::Kind::kGev);
    EXPECT_EQ(c.sections.size(), 2u);
    EXPECT_EQ(c.seed, 9u);

    EXPECT_THROW(ExperimentConfig::parse("trak = r7_80\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::parse("track = oval\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::parse("mode = autopilot\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::parse("downlink = gaussian 1 2\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::parse("speed_kmh = fast\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::parse("laps = 0\n"), InvalidInput);
    EXPECT_THROW(ExperimentConfig::load("/nonexistent.cfg"), InvalidInput);
}

TEST(Config, DefaultDelaysAverageQuarterSecond) {
    EXPECT_NEAR(default_downlink().mean() + default_uplink().mean(), 0.250, 1e-4);
}

TEST(Config, TraceDelayPathRelativeToConfig) {
    const auto dir = std::filesystem::path(::testing::TempDir()) / "ppd_cfg";
    std::filesystem::create_directories(dir);
    delay::write_trace_csv((dir / "up.csv").string(), std::vector<delay::DelaySample>{{0.0, 0.07}, {0.02, 0.09}});
    std::ofstream(dir / "exp.cfg") << "uplink = trace up.csv\n";
    const auto c = ExperimentConfig::load((dir / "exp.cfg").string());
    ASSERT_EQ(c.uplink.kind, DelaySpec::Kind::kTrace);
    EXPECT_EQ(c.uplink.trace, (std::vector<double>{0.07, 0.09}));
}

TEST(Operator, SteersTowardTheLine) {
    const auto track = sim::Track::make("r7_80");
    const ScriptedOperator op(track, {}, 3.0);
    EXPECT_NEAR(op.steer({5.0, 0.0, 0.0}), 0.0, 1e-9);
    EXPECT_GT(op.steer({5.0, 0.5, 0.0}), 0.0);  // left of the line: steer right
    EXPECT_LT(op.steer({5.0, -0.5, 0.0}), 0.0);
    EXPECT_LE(std::abs(op.steer({5.0, -50.0, 3.0})), motion::kMaxSteer);
}

TEST(Loop, DeterministicReport) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.max_lap_time = 6.0;
    EXPECT_EQ(run_experiment(c).report_json(), run_experiment(c).report_json());
}

TEST(Loop, ConstantSteerFollowsCircle) {
    auto c = quick("r7_80", Mode::kInVehicle);
    Simulation sim(c, 1);
    const double steer = 0.2;
    sim.set_external_steer(steer);
    while (sim.time() < c.warmup + 4.0) sim.step();
    // After the speed settles the yaw rate matches v tan(delta) / L.
    const auto a = sim.plant();
    for (int i = 0; i < 500; ++i) sim.step();
    const auto b = sim.plant();
    const double v = c.target_speed();
    EXPECT_NEAR(a.speed, v, 1e-9);
    EXPECT_NEAR(motion::wrap_angle(a.pose.heading - b.pose.heading), v * 0.5 * std::tan(steer) / c.geom.wheelbase,
                1e-9);
}

TEST(Loop, PpOffShowsDelayedPose) {
    auto c = quick("r7_80", Mode::kTeleopNoPP);
    c.max_lap_time = 5.0;
    const auto r = run_experiment(c);
    for (const auto& f : r.logs[0].frames) {
        EXPECT_GE(f.t1, f.t0);
        if (f.stale) continue;
        EXPECT_EQ(f.shown.x, f.captured.x);
        EXPECT_EQ(f.shown.heading, f.captured.heading);
    }
}

TEST(Loop, CommandsNeverActBeforeTheirTimestamp) {
    auto c = quick("r5_120", Mode::kTeleopPP);
    c.max_lap_time = 6.0;
    const auto r = run_experiment(c);
    std::size_t applied = 0;
    for (const auto& cmd : r.logs[0].commands) {
        if (cmd.applied < 0) continue;
        ++applied;
        EXPECT_GE(cmd.applied, cmd.ts);
        EXPECT_GE(cmd.applied, cmd.arrival);
        EXPECT_GE(cmd.applied + 1e-9, cmd.due);
        EXPECT_NEAR(cmd.due, cmd.ts + std::round(cmd.p95 * 1e6) * 1e-6, 1e-9);
    }
    EXPECT_GT(applied, 100u);
}

TEST(Loop, HoldsEarlyCommandsUntilDue) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.uplink = DelaySpec::parse("constant 0.03");
    c.downlink = DelaySpec::parse("constant 0.1");
    c.watchdog = false;  // p999 equals the delay, so it would trip between commands
    c.max_lap_time = 4.0;
    const auto r = run_experiment(c);
    // Window full of 30 ms delays: p95 = 30 ms, every command is due exactly on arrival.
    std::size_t checked = 0;
    for (const auto& cmd : r.logs[0].commands) {
        if (!cmd.fitted || cmd.arrival < 0) continue;
        EXPECT_DOUBLE_EQ(cmd.p95, 0.03);
        EXPECT_FALSE(cmd.late);
        ++checked;
    }
    EXPECT_GT(checked, 50u);
}

TEST(Loop, ForecastMatchesDistanceOnStraight) {
    // 330 ms horizon at 10 km/h on the initial straight: dZ = v tau.
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.downlink = DelaySpec::parse("constant 0.25");
    c.uplink = DelaySpec::parse("constant 0.08");
    c.watchdog = false;
    c.max_lap_time = 6.5;
    const auto r = run_experiment(c);
    bool seen = false;
    for (const auto& f : r.logs[0].frames) {
        if (f.t0 < c.warmup + 3.5 || f.captured.x > 15.0) continue;
        EXPECT_NEAR(f.camera.dz, c.target_speed() * 0.33, 1e-4);
        EXPECT_NEAR(f.camera.dx, 0.0, 1e-6);
        seen = true;
    }
    EXPECT_TRUE(seen);
}

TEST(Loop, WatchdogStopsStarvedVehicle) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.downlink = DelaySpec::parse("constant 0.1");
    // 30 ms normally, one 400 ms outage every 100 commands.
    std::vector<double> trace(100, 0.03);
    trace[99] = 0.4;
    c.uplink.kind = DelaySpec::Kind::kTrace;
    c.uplink.trace = trace;
    c.max_lap_time = 8.0;
    Simulation sim(c, 1);
    bool stopped = false;
    double min_speed = 1e9;
    while (sim.time() < c.warmup + 8.0 && !sim.finished()) {
        sim.step();
        if (sim.time() > c.warmup + 4.0) {
            stopped |= sim.estop();
            min_speed = std::min(min_speed, sim.plant().speed);
        }
    }
    EXPECT_TRUE(stopped);
    EXPECT_LT(min_speed, c.target_speed() - 0.3);
    EXPECT_GT(sim.summarize(1).estop_events, 0);
}

TEST(Loop, InVehicleHasNoWatchdogOrHold) {
    auto c = quick("lane_change", Mode::kInVehicle);
    c.max_lap_time = 5.0;
    const auto r = run_experiment(c);
    EXPECT_EQ(r.laps[0].estop_events, 0);
    EXPECT_EQ(r.laps[0].commands_late, 0u);
    for (const auto& f : r.logs[0].frames) EXPECT_EQ(f.t0, f.t1);
}

TEST(Loop, DelayCompensationOrdering) {
    double eps[3];
    int osc[3];
    const Mode modes[3] = {Mode::kInVehicle, Mode::kTeleopPP, Mode::kTeleopNoPP};
    for (int i = 0; i < 3; ++i) {
        const auto r = run_experiment(quick("r5_120", modes[i]));
        ASSERT_TRUE(r.laps[0].completed);
        eps[i] = r.laps[0].epsilon;
        osc[i] = r.laps[0].oscillations;
    }
    EXPECT_LT(eps[0], eps[1]);
    EXPECT_LT(eps[1], eps[2]);
    EXPECT_GE(osc[2], 1);
    EXPECT_LT(osc[1], osc[2]);
}

TEST(Loop, SlipRaisesPredictionError) {
    auto c = quick("lane_change", Mode::kTeleopPP);
    const auto nominal = run_experiment(c).laps[0].prediction[0];
    c.slip = 0.9;
    const auto slipped = run_experiment(c).laps[0].prediction[0];
    EXPECT_LT(nominal.rmse_lateral, 1e-3);
    EXPECT_GT(slipped.rmse_lateral, 3.0 * nominal.rmse_lateral);
}

TEST(Loop, RenderedZeroDelayPpIsPassthrough) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.downlink = DelaySpec::parse("constant 0");
    c.uplink = DelaySpec::parse("constant 0");
    c.watchdog = false;
    c.render = true;
    c.render_width = 48;
    c.render_height = 27;
    c.rgb_container = io::Container::kPng;
    c.warmup = 0.5;
    Simulation sim(c, 1);
    int shown = 0;
    sim.on_display([&](const DisplayEvent& e) {
        ASSERT_NE(e.image, nullptr);
        EXPECT_TRUE(e.passthrough);
        EXPECT_EQ(e.record->camera.dz, 0.0);
        ++shown;
    });
    while (sim.time() < 1.5) sim.step();
    EXPECT_GT(shown, 20);
}

TEST(Loop, RenderedPpOffShowsDecodedFrame) {
    auto c = quick("r7_80", Mode::kTeleopNoPP);
    c.render = true;
    c.render_width = 48;
    c.render_height = 27;
    c.rgb_container = io::Container::kPng;
    c.warmup = 0.5;
    const auto scene = sim::Scene::along_track(sim::Track::make(c.track), c.seed);
    Simulation sim(c, 1);
    int shown = 0;
    sim.on_display([&](const DisplayEvent& e) {
        sim::CameraModel cam;
        cam.width = 48;
        cam.height = 27;
        const auto expect = sim::render(scene, sim::camera_for(e.record->captured, c.geom, c.cam_height), cam);
        EXPECT_EQ(*e.image, expect.rgb);
        ++shown;
    });
    while (sim.time() < 1.0) sim.step();
    EXPECT_GT(shown, 5);
}

TEST(Loop, RenderedPpWarpsFrames) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.render = true;
    c.render_width = 96;
    c.render_height = 54;
    c.warmup = 0.5;
    Simulation sim(c, 1);
    int warped = 0;
    sim.on_display([&](const DisplayEvent& e) {
        if (!e.passthrough) ++warped;
        EXPECT_EQ(e.image->width, 96);
    });
    while (sim.time() < 3.0) sim.step();
    EXPECT_GT(warped, 10);
}

TEST(Report, WritesFiles) {
    auto c = quick("r7_80", Mode::kTeleopPP);
    c.max_lap_time = 3.0;
    c.laps = 2;
    const auto r = run_experiment(c);
    ASSERT_EQ(r.laps.size(), 2u);
    EXPECT_NE(r.laps[0].seed, r.laps[1].seed);
    const auto dir = std::filesystem::path(::testing::TempDir()) / "ppd_report";
    r.write(dir.string());
    for (const char* f : {"report.json", "timing.json", "poses.csv", "frames.csv", "commands.csv", "estimates.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    std::ifstream in(dir / "poses.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "lap,t,x,y,heading,speed,steer,deviation,signed_offset,estop");
}
