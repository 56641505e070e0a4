#include "ppd/motion_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ppd/config.hpp"
#include "ppd/error.hpp"

namespace ppd::motion {

void VehicleGeometry::validate() const {
    if (!(wheelbase > 0.0)) throw InvalidInput("wheelbase must be > 0");
    if (!(cam_offset >= 0.0)) throw InvalidInput("camera offset must be >= 0");
    if (!std::isfinite(cam_pitch)) throw InvalidInput("camera pitch must be finite");
}

SteerHistory::SteerHistory(double retention) : retention_(retention) {
    if (!(retention >= 2.0)) throw InvalidInput("SteerHistory: retention must be >= 2 s");
}

void SteerHistory::push(double timestamp, double steer) {
    if (!entries_.empty() && !(timestamp > entries_.back().first)) {
        throw InvalidInput("SteerHistory: timestamps must strictly increase");
    }
    entries_.emplace_back(timestamp, steer);
}

void SteerHistory::prune(double now) {
    const double cutoff = now - retention_;
    auto it = std::upper_bound(entries_.begin(), entries_.end(), cutoff,
                               [](double t, const auto& e) { return t < e.first; });
    if (it == entries_.begin()) return;
    entries_.erase(entries_.begin(), std::prev(it));
}

double SteerHistory::at(double t) const {
    if (entries_.empty()) return 0.0;
    auto it = std::upper_bound(entries_.begin(), entries_.end(), t,
                               [](double v, const auto& e) { return v < e.first; });
    if (it == entries_.begin()) return entries_.front().second;
    return std::prev(it)->second;
}

WindowResult window_history(const SteerHistory& h, double t_start, double t_end) {
    if (!(t_start <= t_end)) throw InvalidInput("window_history: t_start must not exceed t_end");
    WindowResult out;
    if (t_start == t_end) return out;
    if (h.empty()) {
        out.segments.push_back({0.0, t_end - t_start});
        out.empty_history = true;
        return out;
    }
    const auto& e = h.entries();
    auto it = std::upper_bound(e.begin(), e.end(), t_start, [](double v, const auto& x) { return v < x.first; });
    double steer = h.at(t_start);
    double prev = t_start;
    for (; it != e.end() && it->first < t_end; ++it) {
        out.segments.push_back({steer, it->first - prev});
        steer = it->second;
        prev = it->first;
    }
    out.segments.push_back({steer, t_end - prev});
    return out;
}

double integrate_segment(AxlePose& pose, double steer, double dt, double& speed, double accel,
                         const VehicleGeometry& geom, double curvature_gain) {
    speed = std::max(speed, 0.0);
    double dist = 0.0;
    if (speed + accel * dt >= 0.0) {
        dist = speed * dt + 0.5 * accel * dt * dt;
        speed += accel * dt;
    } else {
        dist = speed * speed / (-2.0 * accel);
        speed = 0.0;
    }

    const double delta = std::clamp(steer, -kMaxSteer, kMaxSteer);
    const double curvature = curvature_gain * std::tan(delta) / geom.wheelbase;
    if (curvature == 0.0) {
        pose.x += dist * std::sin(pose.psi);
        pose.z += dist * std::cos(pose.psi);
        return dist;
    }
    // Arc of radius 1/curvature; chord form of X -= R (cos psi' - cos psi),
    // Z += R (sin psi' - sin psi) stays accurate as the radius grows.
    const double dpsi = dist * curvature;
    const double chord = 2.0 * std::sin(0.5 * dpsi) / curvature;
    const double psi_mid = pose.psi + 0.5 * dpsi;
    pose.x += chord * std::sin(psi_mid);
    pose.z += chord * std::cos(psi_mid);
    pose.psi += dpsi;
    return dist;
}

AxlePose integrate_trajectory(std::span<const SteerSegment> segments, double v0, double accel,
                              const VehicleGeometry& geom, double curvature_gain) {
    if (!std::isfinite(v0) || !std::isfinite(accel)) throw InvalidInput("integrate_trajectory: non-finite speed");
    AxlePose pose;
    double speed = v0;
    for (const auto& seg : segments) {
        if (!std::isfinite(seg.steer) || !std::isfinite(seg.dt) || seg.dt < 0.0) {
            throw InvalidInput("integrate_trajectory: invalid segment");
        }
        integrate_segment(pose, seg.steer, seg.dt, speed, accel, geom, curvature_gain);
    }
    return pose;
}

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

PoseDelta camera_pose_change(const AxlePose& axle, const VehicleGeometry& geom) {
    const double c = geom.cam_offset;
    return {axle.x + c * std::sin(axle.psi), axle.z - c * (1.0 - std::cos(axle.psi)), wrap_angle(axle.psi)};
}

DelayBookkeeping DelayBookkeeping::make(double t0, double t1, double tau2) {
    if (!(t1 >= t0)) throw InvalidInput("delay bookkeeping: receive time precedes capture time");
    if (!(tau2 >= 0.0)) throw InvalidInput("delay bookkeeping: negative uplink delay");
    return {t0, t1, t1 - t0, tau2, (t1 - t0) + tau2};
}

Forecast forecast(double t0, double t1, const SteerHistory& h, double v0, double accel,
                  const delay::PercentileEstimate& est, const VehicleGeometry& geom) {
    Forecast f;
    f.delays = DelayBookkeeping::make(t0, t1, est.p95);
    const auto window = window_history(h, t1 - f.delays.tau, t1);
    f.empty_history = window.empty_history;
    f.axle = integrate_trajectory(window.segments, v0, accel, geom);
    f.camera = camera_pose_change(f.axle, geom);
    return f;
}

WorldPose compose(const WorldPose& base, const AxlePose& delta) {
    const double c = std::cos(base.heading);
    const double s = std::sin(base.heading);
    // forward = (c, s), right = (s, -c); yaw to the right lowers the heading.
    return {base.x + delta.z * c + delta.x * s, base.y + delta.z * s - delta.x * c, base.heading - delta.psi};
}

AxlePose relative(const WorldPose& base, const WorldPose& target) {
    const double c = std::cos(base.heading);
    const double s = std::sin(base.heading);
    const double dx = target.x - base.x;
    const double dy = target.y - base.y;
    return {dx * s - dy * c, dx * c + dy * s, wrap_angle(base.heading - target.heading)};
}

std::optional<WorldPose> interpolate(std::span<const TimedPose> log, double t) {
    if (log.empty() || t < log.front().t || t > log.back().t) return std::nullopt;
    auto it = std::lower_bound(log.begin(), log.end(), t, [](const TimedPose& p, double v) { return p.t < v; });
    if (it->t == t || it == log.begin()) return it->pose;
    const auto& b = *it;
    const auto& a = *std::prev(it);
    const double f = (t - a.t) / (b.t - a.t);
    return WorldPose{a.pose.x + f * (b.pose.x - a.pose.x), a.pose.y + f * (b.pose.y - a.pose.y),
                     a.pose.heading + f * wrap_angle(b.pose.heading - a.pose.heading)};
}

std::vector<PredictionError> evaluate_prediction_error(std::span<const PredictionSample> predicted,
                                                       std::span<const TimedPose> realized,
                                                       std::span<const TimeSection> sections) {
    std::vector<TimeSection> secs(sections.begin(), sections.end());
    if (secs.empty()) secs.push_back({-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});

    std::vector<PredictionError> out(secs.size());
    for (const auto& p : predicted) {
        const auto actual = interpolate(realized, p.t_target);
        if (!actual) continue;
        const AxlePose err = relative(*actual, p.predicted);
        for (std::size_t i = 0; i < secs.size(); ++i) {
            if (p.t_target < secs[i].begin || p.t_target >= secs[i].end) continue;
            out[i].rmse_longitudinal += err.z * err.z;
            out[i].rmse_lateral += err.x * err.x;
            out[i].rmse_yaw += err.psi * err.psi;
            ++out[i].count;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& e = out[i];
        if (e.count == 0) {
            throw InvalidInput("evaluate_prediction_error: no overlapping samples in section " + std::to_string(i));
        }
        const double n = static_cast<double>(e.count);
        e.rmse_longitudinal = std::sqrt(e.rmse_longitudinal / n);
        e.rmse_lateral = std::sqrt(e.rmse_lateral / n);
        e.rmse_yaw = std::sqrt(e.rmse_yaw / n);
    }
    return out;
}

std::vector<TimedPose> read_pose_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open pose log: " + path);
    std::vector<TimedPose> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 4) throw InvalidInput(path + ":" + std::to_string(line_no) + ": expected t,X,Z,Psi");
        try {
            out.push_back({std::stod(f[0]), {std::stod(f[1]), std::stod(f[2]), std::stod(f[3])}});
        } catch (const std::exception&) {
            if (line_no == 1) continue;
            throw InvalidInput(path + ":" + std::to_string(line_no) + ": not numeric");
        }
    }
    return out;
}

void write_pose_csv(const std::string& path, std::span<const TimedPose> poses) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write pose log: " + path);
    out.precision(12);
    out << "t,X,Z,Psi\n";
    for (const auto& p : poses) out << p.t << ',' << p.pose.x << ',' << p.pose.y << ',' << p.pose.heading << '\n';
}

}  // namespace ppd::motion
