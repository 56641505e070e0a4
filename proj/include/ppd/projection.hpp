#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ppd/image.hpp"
#include "ppd/motion_predictor.hpp"

namespace ppd::proj {

inline constexpr double kDefaultZNear = 0.2;

/// One point per source pixel in the camera frame (x right, y down, z forward).
struct PointCloud {
    int width = 0;
    int height = 0;
    std::vector<double> x, y, z;
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return z.size(); }
};

/// Pixel-center coordinates: column `c` (0-based) sits at c + 0.5 - W/2
/// from the optical axis, i.e. 1-based x_d = c + 1 shifted by W/2 + 0.5.
double centered_col(int col, int width);
double centered_row(int row, int height);

/// Throws InvalidInput if either FOV is not in (0, pi) or the grid is empty.
PointCloud depth_to_points(const DepthMap& dm);

/// Row-major homogeneous 4x4 matrix.
struct WarpTransform {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static WarpTransform identity() { return {}; }
    bool is_identity() const;
    double operator()(int r, int c) const { return m[r * 4 + c]; }
    /// this * other: applies `other` first.
    WarpTransform operator*(const WarpTransform& other) const;
    void apply(double x, double y, double z, double& ox, double& oy, double& oz) const;
};

/// Maps points seen from the old camera into the frame of a camera that
/// moved by `delta` (yaw right-positive), conjugated by the downward pitch.
/// A zero delta yields the exact identity regardless of pitch.
WarpTransform make_transform(const motion::PoseDelta& delta, double pitch);

/// Points ending up with z <= z_near are marked invalid.
PointCloud transform_points(const PointCloud& pc, const WarpTransform& t, double z_near = kDefaultZNear);

/// New 1-based pixel position (x_dNew, y_dNew) and depth of a point.
struct PixelTarget {
    double col = 0.0;
    double row = 0.0;
    double z = 0.0;
    bool in_frame = false;  ///< false for invalid points and centers outside the frame
};

std::vector<PixelTarget> points_to_pixels(const PointCloud& pc, double fov_h, double fov_v);

/// S = z_old / z_new. Throws InvalidInput unless z_new > 0.
double pixel_scale(double z_old, double z_new);

/// Inclusive 0-based pixel span covered by a point centered at 1-based
/// `center` with scale S: floor(center - (S-1)/2) .. ceil(center + (S-1)/2),
/// ordered so lo <= hi (S < 1 still covers at least one pixel).
struct Span {
    int lo = 0;
    int hi = 0;
};
Span pixel_span(double center, double scale);

struct WarpedFrame {
    RgbImage rgb;
    DepthMap new_depth;
    std::vector<std::uint8_t> valid_mask;  ///< 1 where at least one source pixel landed
    std::array<std::uint8_t, 3> fallback_color{0, 0, 0};  ///< mean source color

    std::size_t valid_count() const;
};

struct RenderOptions {
    int workers = 0;  ///< 0 = hardware concurrency
    double z_near = kDefaultZNear;
};

/// Far-to-near splatting of every source pixel onto its span. Output is
/// identical for any worker count. Throws InvalidInput on size mismatch.
WarpedFrame render_projection(const RgbImage& rgb, const DepthMap& dm, const WarpTransform& t,
                              const RenderOptions& opts = {});

/// Reference painter: z-buffer where the smaller new depth wins and equal
/// depths go to the larger source index. Same result as render_projection,
/// O(pixels) memory, single-threaded; used for cross-checking.
WarpedFrame render_projection_zbuffer(const RgbImage& rgb, const DepthMap& dm, const WarpTransform& t,
                                      double z_near = kDefaultZNear);

struct InpaintResult {
    RgbImage image;
    bool uniform_fill = false;  ///< mask had no valid pixel; filled with fallback_color
};

/// Fast-marching fill of mask-false pixels in order of distance from the
/// valid region; each is the normalized weighted average of already known
/// pixels within `radius` (weights: direction, distance, level-set proximity).
InpaintResult inpaint(const WarpedFrame& frame, int radius = 5);

struct ProjectOptions {
    RenderOptions render;
    int inpaint_radius = 5;
    bool fill_holes = true;
};

struct ProjectResult {
    RgbImage image;
    WarpedFrame warped;
    bool passthrough = false;
    bool uniform_fill = false;
    double warp_ms = 0.0;
    double inpaint_ms = 0.0;
};

ProjectResult project_frame(const RgbImage& rgb, const DepthMap& dm, const motion::PoseDelta& delta,
                            const motion::VehicleGeometry& geom, const ProjectOptions& opts = {});

}  // namespace ppd::proj
