#pragma once

#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppd/delay_model.hpp"

namespace ppd::motion {

inline constexpr double kMaxSteer = 35.0 * std::numbers::pi / 180.0;

struct VehicleGeometry {
    double wheelbase = 1.76;  ///< m
    double cam_offset = 0.8;  ///< m, camera ahead of the rear axle center
    double cam_pitch = 0.0;   ///< rad, downward positive

    void validate() const;
};

/// Front-wheel steer commands issued by the station, keyed by station time.
class SteerHistory {
public:
    explicit SteerHistory(double retention = 5.0);

    /// Throws InvalidInput unless timestamps strictly increase.
    void push(double timestamp, double steer);
    /// Drops samples older than `now - retention`, keeping the one sample
    /// that is still active at that boundary.
    void prune(double now);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    double retention() const { return retention_; }
    const std::vector<std::pair<double, double>>& entries() const { return entries_; }
    /// Zero-order-hold value at `t`; the earliest sample extends backwards.
    double at(double t) const;

private:
    double retention_;
    std::vector<std::pair<double, double>> entries_;  // (timestamp, steer)
};

/// A steer angle held for `dt` seconds.
struct SteerSegment {
    double steer = 0.0;
    double dt = 0.0;
};

struct WindowResult {
    std::vector<SteerSegment> segments;
    bool empty_history = false;
};

/// Zero-order-hold decomposition of [t_start, t_end]; the segment durations
/// sum to t_end - t_start. Throws InvalidInput unless t_start <= t_end.
WindowResult window_history(const SteerHistory& h, double t_start, double t_end);

/// Rear-axle pose relative to the pose at the start of integration:
/// X lateral (right positive), Z forward, Psi yaw (right turn positive).
struct AxlePose {
    double x = 0.0;
    double z = 0.0;
    double psi = 0.0;
};

/// Camera displacement in the image-aligned frame.
struct PoseDelta {
    double dx = 0.0;
    double dz = 0.0;
    double dpsi = 0.0;

    bool is_zero() const { return dx == 0.0 && dz == 0.0 && dpsi == 0.0; }
};

/// Exact integration of the single-track kinematic model over piecewise
/// constant steer, with speed v0 + a t clamped at zero. Steer is saturated to
/// +-kMaxSteer. `curvature_gain` scales the path curvature (1 = nominal model).
AxlePose integrate_trajectory(std::span<const SteerSegment> segments, double v0, double accel,
                              const VehicleGeometry& geom, double curvature_gain = 1.0);

/// Advances `pose` along one constant-steer segment; returns the distance travelled.
double integrate_segment(AxlePose& pose, double steer, double dt, double& speed, double accel,
                         const VehicleGeometry& geom, double curvature_gain = 1.0);

PoseDelta camera_pose_change(const AxlePose& axle, const VehicleGeometry& geom);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Downlink/uplink delay bookkeeping for one frame.
struct DelayBookkeeping {
    double t0 = 0.0;    ///< capture time
    double t1 = 0.0;    ///< station receive time
    double tau1 = 0.0;  ///< downlink delay t1 - t0
    double tau2 = 0.0;  ///< uplink delay estimate
    double tau = 0.0;   ///< tau1 + tau2

    static DelayBookkeeping make(double t0, double t1, double tau2);
};

struct Forecast {
    PoseDelta camera;
    AxlePose axle;
    DelayBookkeeping delays;
    bool empty_history = false;
};

/// Integrates the station's steer history over [t1 - tau, t1] with
/// tau2 = est.p95 and returns the camera pose change.
Forecast forecast(double t0, double t1, const SteerHistory& h, double v0, double accel,
                  const delay::PercentileEstimate& est, const VehicleGeometry& geom);

/// World-frame vehicle pose: x, y in meters, heading counterclockwise from +x.
struct WorldPose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

/// Applies an axle-frame displacement to a world pose.
WorldPose compose(const WorldPose& base, const AxlePose& delta);
/// Expresses `target` in the axle frame of `base`.
AxlePose relative(const WorldPose& base, const WorldPose& target);

struct TimedPose {
    double t = 0.0;
    WorldPose pose;
};

/// Linear interpolation in a time-sorted pose log; nullopt outside its span.
std::optional<WorldPose> interpolate(std::span<const TimedPose> log, double t);

struct PredictionSample {
    double t_target = 0.0;  ///< time the prediction refers to
    WorldPose predicted;
};

struct PredictionError {
    double rmse_longitudinal = 0.0;
    double rmse_lateral = 0.0;
    double rmse_yaw = 0.0;
    std::size_t count = 0;
};

struct TimeSection {
    double begin = 0.0;
    double end = 0.0;
};

/// RMSE between predicted poses and realized poses at the same instants,
/// expressed in the realized vehicle frame. One result per section; a section
/// without overlapping samples throws InvalidInput.
std::vector<PredictionError> evaluate_prediction_error(std::span<const PredictionSample> predicted,
                                                       std::span<const TimedPose> realized,
                                                       std::span<const TimeSection> sections);

/// Pose CSV with header `t,X,Z,Psi`, where X, Z are the world ground-plane
/// coordinates (WorldPose::x, WorldPose::y) and Psi the world heading.
std::vector<TimedPose> read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, std::span<const TimedPose> poses);

}  // namespace ppd::motion
