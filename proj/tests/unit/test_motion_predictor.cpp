#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ppd/error.hpp"
#include "ppd/motion_predictor.hpp"

using namespace ppd::motion;
using std::numbers::pi;

namespace {

constexpr double kDeg = pi / 180.0;
const VehicleGeometry kGeom{};

// Forward Euler on x' = v sin psi, z' = v cos psi, psi' = v tan(delta) / L.
AxlePose euler(const std::vector<SteerSegment>& segs, double v0, double accel, double h) {
    AxlePose p;
    double v = v0;
    for (const auto& s : segs) {
        const double delta = std::clamp(s.steer, -kMaxSteer, kMaxSteer);
        const long n = std::lround(s.dt / h);
        const double step = n > 0 ? s.dt / n : 0.0;
        for (long i = 0; i < n; ++i) {
            const double psi = p.psi;
            p.x += v * std::sin(psi) * step;
            p.z += v * std::cos(psi) * step;
            p.psi += v * std::tan(delta) / kGeom.wheelbase * step;
            v = std::max(0.0, v + accel * step);
        }
    }
    return p;
}

}  // namespace

TEST(Integration, StraightLine) {
    const std::vector<SteerSegment> segs{{0.0, 0.4}};
    const auto p = integrate_trajectory(segs, 4.0, 0.0, kGeom);
    EXPECT_EQ(p.x, 0.0);
    EXPECT_DOUBLE_EQ(p.z, 1.6);
    EXPECT_EQ(p.psi, 0.0);
}

TEST(Integration, ConstantSteerFollowsCircle) {
    const double r0 = 6.0;
    const double delta = std::atan(kGeom.wheelbase / r0);
    const double v0 = 2.5, t = 3.0;
    // Split into uneven segments of the same steer.
    const std::vector<SteerSegment> segs{{delta, 0.7}, {delta, 1.13}, {delta, 1.17}};
    const auto p = integrate_trajectory(segs, v0, 0.0, kGeom);
    const double psi = v0 * t / r0;
    EXPECT_NEAR(p.psi, psi, 1e-12);
    EXPECT_NEAR(p.x, -r0 * (std::cos(psi) - 1.0), 1e-12);
    EXPECT_NEAR(p.z, r0 * std::sin(psi), 1e-12);
}

TEST(Integration, MatchesFineEuler) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> steer(-35 * kDeg, 35 * kDeg), dt(0.005, 0.04),
        v0(0.0, 2.78), acc(-1.0, 1.0), tau(0.05, 0.5);
    for (int k = 0; k < 25; ++k) {
        std::vector<SteerSegment> segs;
        const double total = tau(rng);
        double used = 0;
        while (used < total) {
            const double d = std::min(dt(rng), total - used);
            segs.push_back({steer(rng), d});
            used += d;
        }
        const double v = v0(rng), a = acc(rng);
        const auto exact = integrate_trajectory(segs, v, a, kGeom);
        const auto ref = euler(segs, v, a, 1e-5);
        EXPECT_NEAR(exact.x, ref.x, 1e-5);
        EXPECT_NEAR(exact.z, ref.z, 1e-5);
        EXPECT_NEAR(exact.psi, ref.psi, 1e-5);
    }
}

TEST(Integration, MirrorSymmetry) {
    const std::vector<SteerSegment> a{{0.2, 0.1}, {-0.05, 0.2}, {0.4, 0.15}};
    std::vector<SteerSegment> b = a;
    for (auto& s : b) s.steer = -s.steer;
    const auto pa = integrate_trajectory(a, 2.0, 0.3, kGeom);
    const auto pb = integrate_trajectory(b, 2.0, 0.3, kGeom);
    EXPECT_DOUBLE_EQ(pa.x, -pb.x);
    EXPECT_DOUBLE_EQ(pa.psi, -pb.psi);
    EXPECT_DOUBLE_EQ(pa.z, pb.z);
}

TEST(Integration, SpeedClampsAtStop) {
    const std::vector<SteerSegment> segs{{0.0, 1.0}, {0.0, 1.0}};
    // 1 m/s decelerating at 2 m/s^2 stops after 0.25 m.
    const auto p = integrate_trajectory(segs, 1.0, -2.0, kGeom);
    EXPECT_DOUBLE_EQ(p.z, 0.25);
}

TEST(Integration, SteerSaturatesAndValidates) {
    const std::vector<SteerSegment> wild{{1.2, 0.3}};
    const std::vector<SteerSegment> limit{{kMaxSteer, 0.3}};
    const auto a = integrate_trajectory(wild, 2.0, 0.0, kGeom);
    const auto b = integrate_trajectory(limit, 2.0, 0.0, kGeom);
    EXPECT_DOUBLE_EQ(a.psi, b.psi);
    const std::vector<SteerSegment> bad{{0.0, NAN}};
    EXPECT_THROW(integrate_trajectory(bad, 1.0, 0.0, kGeom), ppd::InvalidInput);
    EXPECT_THROW(integrate_trajectory(limit, INFINITY, 0.0, kGeom), ppd::InvalidInput);
    EXPECT_EQ(integrate_trajectory({}, 3.0, 0.0, kGeom).z, 0.0);
}

TEST(Integration, CurvatureGainScalesTurning) {
    const std::vector<SteerSegment> segs{{0.3, 0.5}};
    const auto nominal = integrate_trajectory(segs, 2.78, 0.0, kGeom, 1.0);
    const auto slipped = integrate_trajectory(segs, 2.78, 0.0, kGeom, 0.9);
    EXPECT_NEAR(slipped.psi, 0.9 * nominal.psi, 1e-12);
    EXPECT_LT(slipped.x, nominal.x);
}

TEST(WindowHistory, AlignedSamples) {
    SteerHistory h;
    for (int i = 0; i <= 10; ++i) h.push(i * 0.02, 0.01 * i);
    const auto w = window_history(h, 0.0, 0.1);
    ASSERT_EQ(w.segments.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_NEAR(w.segments[i].dt, 0.02, 1e-15);
        EXPECT_DOUBLE_EQ(w.segments[i].steer, 0.01 * i);
    }
}

TEST(WindowHistory, PartialEdgeSegments) {
    SteerHistory h;
    for (int i = 0; i <= 10; ++i) h.push(i * 0.02, 0.01 * i);
    const auto w = window_history(h, 0.013, 0.107);
    double sum = 0;
    for (const auto& s : w.segments) sum += s.dt;
    EXPECT_NEAR(sum, 0.094, 1e-15);
    EXPECT_NEAR(w.segments.front().dt, 0.007, 1e-15);
    EXPECT_DOUBLE_EQ(w.segments.front().steer, 0.0);
    EXPECT_NEAR(w.segments.back().dt, 0.007, 1e-15);
    EXPECT_DOUBLE_EQ(w.segments.back().steer, 0.05);
}

TEST(WindowHistory, EdgesAndErrors) {
    SteerHistory empty;
    const auto w = window_history(empty, 1.0, 1.3);
    ASSERT_EQ(w.segments.size(), 1u);
    EXPECT_TRUE(w.empty_history);
    EXPECT_DOUBLE_EQ(w.segments[0].steer, 0.0);
    EXPECT_NEAR(w.segments[0].dt, 0.3, 1e-15);
    EXPECT_TRUE(window_history(empty, 1.0, 1.0).segments.empty());
    EXPECT_THROW(window_history(empty, 2.0, 1.0), ppd::InvalidInput);

    SteerHistory late;
    late.push(5.0, 0.2);
    const auto before = window_history(late, 4.0, 4.5);
    ASSERT_EQ(before.segments.size(), 1u);
    EXPECT_DOUBLE_EQ(before.segments[0].steer, 0.2);
}

TEST(SteerHistoryTest, PushPruneAndLookup) {
    SteerHistory h(2.0);
    h.push(0.0, 0.1);
    h.push(1.0, 0.2);
    h.push(2.5, 0.3);
    EXPECT_THROW(h.push(2.5, 0.0), ppd::InvalidInput);
    EXPECT_DOUBLE_EQ(h.at(1.7), 0.2);
    h.prune(3.9);  // cutoff 1.9: the sample at 1.0 is still active there
    ASSERT_EQ(h.size(), 2u);
    EXPECT_DOUBLE_EQ(h.at(1.9), 0.2);
    EXPECT_THROW(SteerHistory(1.0), ppd::InvalidInput);
}

TEST(CameraPose, Examples) {
    auto d = camera_pose_change({0.3, 1.2, 0.0}, kGeom);
    EXPECT_DOUBLE_EQ(d.dx, 0.3);
    EXPECT_DOUBLE_EQ(d.dz, 1.2);
    d = camera_pose_change({0.0, 0.0, 15 * kDeg}, kGeom);
    EXPECT_NEAR(d.dx, 0.8 * std::sin(15 * kDeg), 1e-15);
    EXPECT_NEAR(d.dx, 0.207, 5e-4);
    EXPECT_NEAR(d.dz, -0.0273, 5e-5);
    VehicleGeometry no_offset = kGeom;
    no_offset.cam_offset = 0.0;
    d = camera_pose_change({0.1, 0.9, 0.2}, no_offset);
    EXPECT_DOUBLE_EQ(d.dx, 0.1);
    EXPECT_DOUBLE_EQ(d.dz, 0.9);
    EXPECT_DOUBLE_EQ(d.dpsi, 0.2);
    EXPECT_NEAR(camera_pose_change({0, 0, 3 * pi}, kGeom).dpsi, pi, 1e-12);
}

TEST(WrapAngle, HalfOpenInterval) {
    EXPECT_DOUBLE_EQ(wrap_angle(pi), pi);
    EXPECT_DOUBLE_EQ(wrap_angle(-pi), pi);
    EXPECT_NEAR(wrap_angle(2 * pi + 0.1), 0.1, 1e-12);
}

TEST(Forecast, ComposesSubOperations) {
    SteerHistory h;
    for (int i = 0; i < 100; ++i) h.push(i * 0.02, 0.2 * std::sin(i * 0.1));
    ppd::delay::PercentileEstimate est;
    est.p95 = 0.083;
    const auto f = forecast(1.5, 1.72, h, 2.5, 0.1, est, kGeom);
    EXPECT_NEAR(f.delays.tau, 0.22 + 0.083, 1e-15);
    const auto w = window_history(h, 1.72 - f.delays.tau, 1.72);
    const auto axle = integrate_trajectory(w.segments, 2.5, 0.1, kGeom);
    const auto cam = camera_pose_change(axle, kGeom);
    EXPECT_EQ(f.camera.dx, cam.dx);
    EXPECT_EQ(f.camera.dz, cam.dz);
    EXPECT_EQ(f.camera.dpsi, cam.dpsi);
}

TEST(Forecast, ZeroDelayAndStraightExample) {
    SteerHistory h;
    h.push(0.0, 0.0);
    ppd::delay::PercentileEstimate est;
    est.p95 = 0.0;
    EXPECT_TRUE(forecast(2.0, 2.0, h, 3.0, 0.0, est, kGeom).camera.is_zero());
    est.p95 = 0.15;
    const auto f = forecast(1.0, 1.25, h, 4.0, 0.0, est, kGeom);
    EXPECT_NEAR(f.camera.dz, 1.6, 1e-12);
    EXPECT_THROW(forecast(2.0, 1.0, h, 3.0, 0.0, est, kGeom), ppd::InvalidInput);
}

TEST(WorldPoseMath, ComposeAndRelativeAreInverse) {
    const WorldPose base{3.0, -2.0, 0.7};
    const AxlePose d{0.4, 1.9, 0.25};
    const auto target = compose(base, d);
    const auto back = relative(base, target);
    EXPECT_NEAR(back.x, d.x, 1e-12);
    EXPECT_NEAR(back.z, d.z, 1e-12);
    EXPECT_NEAR(back.psi, d.psi, 1e-12);
    // Forward along heading 0 is +x; right of heading 0 is -y.
    const auto p = compose({0, 0, 0}, {1.0, 2.0, 0.0});
    EXPECT_DOUBLE_EQ(p.x, 2.0);
    EXPECT_DOUBLE_EQ(p.y, -1.0);
}

TEST(PredictionError, ZeroAndConstantOffset) {
    std::vector<TimedPose> realized;
    std::vector<PredictionSample> same, shifted;
    for (int i = 0; i <= 100; ++i) {
        const double t = i * 0.1;
        const WorldPose p{t, 0.5 * t, 0.3};
        realized.push_back({t, p});
        same.push_back({t, p});
        shifted.push_back({t, compose(p, {0.1, 0.0, 0.0})});
    }
    const std::vector<TimeSection> sections{{0.0, 5.0}, {5.0, 10.01}};
    for (const auto& e : evaluate_prediction_error(same, realized, sections)) {
        EXPECT_NEAR(e.rmse_lateral, 0.0, 1e-12);
        EXPECT_NEAR(e.rmse_longitudinal, 0.0, 1e-12);
    }
    for (const auto& e : evaluate_prediction_error(shifted, realized, sections)) {
        EXPECT_NEAR(e.rmse_lateral, 0.1, 1e-12);
        EXPECT_NEAR(e.rmse_longitudinal, 0.0, 1e-12);
        EXPECT_GT(e.count, 0u);
    }
    const std::vector<TimeSection> outside{{20.0, 30.0}};
    EXPECT_THROW(evaluate_prediction_error(same, realized, outside), ppd::InvalidInput);
}

TEST(PoseCsv, RoundTrip) {
    const std::string path = ::testing::TempDir() + "poses.csv";
    const std::vector<TimedPose> poses{{0.0, {1.0, 2.0, 0.1}}, {0.033, {1.1, 2.05, 0.12}}};
    write_pose_csv(path, poses);
    const auto back = read_pose_csv(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_DOUBLE_EQ(back[1].pose.y, 2.05);
    std::remove(path.c_str());
}
