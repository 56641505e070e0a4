#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ppd/image.hpp"
#include "ppd/motion_predictor.hpp"

namespace ppd::sim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

using Color = std::array<std::uint8_t, 3>;

/// Track centerline as a dense polyline (world x, y in meters).
class Track {
public:
    Track(std::string name, std::vector<Vec2> points);

    /// Named layouts: "r7_80" (left turn, radius 7 m, 80 deg), "r5_120"
    /// (left turn, radius 5 m, 120 deg), "lane_change" (3.5 m double lane change).
    /// All start at the origin heading +x. Throws InvalidInput for unknown names.
    static Track make(const std::string& name, double spacing = 0.05);
    static std::vector<std::string> names();

    const std::string& name() const { return name_; }
    const std::vector<Vec2>& points() const { return pts_; }
    double length() const { return arc_.back(); }

    struct Nearest {
        double distance = 0.0;
        double signed_offset = 0.0;  ///< positive left of the direction of travel
        double s = 0.0;              ///< arc length at the foot point
        Vec2 foot;
    };
    Nearest nearest(Vec2 p) const;

    Vec2 point_at(double s) const;
    double heading_at(double s) const;

private:
    std::string name_;
    std::vector<Vec2> pts_;
    std::vector<double> arc_;
    // Uniform grid over segment indices for nearest queries.
    double cell_ = 1.0;
    double gx0_ = 0.0, gy0_ = 0.0;
    int gw_ = 0, gh_ = 0;
    std::vector<std::vector<std::uint32_t>> grid_;

    Nearest nearest_segment(Vec2 p, std::size_t seg) const;
};

/// Minimum Euclidean distance from `p` to the centerline.
double deviation(Vec2 p, const Track& track);

struct Box {
    double x0, y0, z0, x1, y1, z1;
    Color color;
};

/// Vertical cylinder standing on the ground.
struct Pole {
    double x, y, radius, height;
    Color color;
};

struct Scene {
    Color sky{150, 190, 235};
    double sky_distance = 100.0;  ///< backdrop sphere radius around the camera
    Color grass_a{70, 120, 60};
    Color grass_b{95, 145, 75};
    double checker = 1.0;  ///< off-road checker square size, m
    Color road{90, 90, 95};
    Color stripe{235, 235, 235};
    double road_half_width = 1.75;
    double stripe_half_width = 0.07;
    std::vector<Box> boxes;
    std::vector<Pole> poles;

    /// Builds the distance-to-road lookup used for ground shading.
    void paint_road(const Track& track, double margin = 40.0, double cell = 0.25);
    double road_distance(double x, double y) const;

    /// Key/value description: sky, grass_a, grass_b, road, stripe (r g b),
    /// checker, road_half_width, sky_distance, box (x0 y0 z0 x1 y1 z1 r g b,
    /// repeatable), pole (x y radius height r g b, repeatable), track (name),
    /// buildings (count of seeded random boxes along the track), seed.
    static Scene load(const std::string& path);
    static Scene parse(const std::string& text);

    /// Seeded roadside buildings and poles along the track, road painted.
    static Scene along_track(const Track& track, std::uint64_t seed, int buildings = 24);

private:
    double dx0_ = 0.0, dy0_ = 0.0, dcell_ = 0.25;
    int dw_ = 0, dh_ = 0;
    std::vector<float> dist_;
};

struct CameraModel {
    int width = 672;
    int height = 376;
    double fov_h = 1.5184364492350666;  ///< 87 deg
    double fov_v = 0.0;                 ///< 0 = square pixels from fov_h

    double vertical_fov() const;
    void validate() const;
};

/// Camera position on the ground plane, mounting height and orientation.
struct CameraPose {
    double x = 0.0;
    double y = 0.0;
    double height = 1.5;
    double heading = 0.0;  ///< CCW from +x
    double pitch = 0.0;    ///< downward positive
};

struct Frame {
    RgbImage rgb;
    DepthMap depth;
};

/// Ray casts every pixel center; depth is measured along the optical axis.
Frame render(const Scene& scene, const CameraPose& pose, const CameraModel& cam, int workers = 0);

/// Camera pose for a vehicle whose rear axle sits at `axle`.
CameraPose camera_for(const motion::WorldPose& axle, const motion::VehicleGeometry& geom, double height);

/// Camera pose reached from `from` after the camera-frame displacement `delta`.
CameraPose move_camera(const CameraPose& from, const motion::PoseDelta& delta);

struct PlantState {
    motion::WorldPose pose;
    double speed = 0.0;
};

/// Single-track kinematic step. `slip` < 1 scales the path curvature to mimic
/// lateral slip the predictor does not model.
PlantState plant_step(const PlantState& s, double steer, double accel, double dt, const motion::VehicleGeometry& geom,
                      double slip = 1.0);

/// Point `wheelbase + offset` ahead of the rear axle along the heading.
Vec2 forward_point(const PlantState& s, const motion::VehicleGeometry& geom, double offset = 0.8);

}  // namespace ppd::sim
