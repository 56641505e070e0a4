#include "ppd/projection.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numbers>

#include "ppd/error.hpp"
#include "ppd/parallel.hpp"

namespace ppd::proj {
namespace {

void check_fov(double fov_h, double fov_v) {
    if (!(fov_h > 0.0 && fov_h < std::numbers::pi && fov_v > 0.0 && fov_v < std::numbers::pi)) {
        throw InvalidInput("field of view must be in (0, pi) on both axes");
    }
}

void check_pair(const RgbImage& rgb, const DepthMap& dm) {
    if (rgb.width != dm.width || rgb.height != dm.height) throw InvalidInput("RGB and depth dimensions differ");
    if (rgb.width <= 0 || rgb.height <= 0) throw InvalidInput("empty frame");
    if (rgb.data.size() != rgb.pixel_count() * 3 || dm.data.size() != dm.pixel_count()) {
        throw InvalidInput("frame buffer size does not match dimensions");
    }
    check_fov(dm.fov_h, dm.fov_v);
}

std::array<std::uint8_t, 3> mean_color(const RgbImage& rgb) {
    std::array<std::uint64_t, 3> sum{};
    for (std::size_t i = 0; i < rgb.data.size(); i += 3) {
        for (int k = 0; k < 3; ++k) sum[k] += rgb.data[i + k];
    }
    std::array<std::uint8_t, 3> out{};
    const auto n = std::max<std::uint64_t>(rgb.pixel_count(), 1);
    for (int k = 0; k < 3; ++k) out[k] = static_cast<std::uint8_t>((sum[k] + n / 2) / n);
    return out;
}

// Per source pixel: destination span and new depth, or nothing.
struct Splat {
    float z = 0.0f;
    std::int16_t r0 = 0, r1 = -1, c0 = 0, c1 = -1;
};

struct Projector {
    int width, height;
    double kx, ky;          // tan(fov/2) / (W/2)
    const WarpTransform& t;
    double z_near;

    bool splat(int row, int col, float depth, Splat& out, double& z_new) const {
        if (!DepthMap::is_valid(depth)) return false;
        const double z = depth;
        const double x = z * centered_col(col, width) * kx;
        const double y = z * centered_row(row, height) * ky;
        double nx, ny, nz;
        t.apply(x, y, z, nx, ny, nz);
        if (!(nz > z_near)) return false;
        const double inv = 1.0 / nz;
        const double cx = nx * inv / kx + width / 2.0 + 0.5;
        const double cy = ny * inv / ky + height / 2.0 + 0.5;
        if (!(cx >= 0.5 && cx < width + 0.5 && cy >= 0.5 && cy < height + 0.5)) return false;
        const double s = z / nz;
        const Span sc = pixel_span(cx, s);
        const Span sr = pixel_span(cy, s);
        const int c0 = std::max(sc.lo, 0), c1 = std::min(sc.hi, width - 1);
        const int r0 = std::max(sr.lo, 0), r1 = std::min(sr.hi, height - 1);
        if (c0 > c1 || r0 > r1) return false;
        out = {static_cast<float>(nz), static_cast<std::int16_t>(r0), static_cast<std::int16_t>(r1),
               static_cast<std::int16_t>(c0), static_cast<std::int16_t>(c1)};
        z_new = nz;
        return true;
    }
};

// Stable LSD radix sort of (key, index) pairs by key ascending.
void radix_sort(std::vector<std::uint32_t>& keys, std::vector<std::uint32_t>& idx) {
    const std::size_t n = keys.size();
    std::vector<std::uint32_t> k2(n);
    std::vector<std::uint32_t> i2(n);
    for (int shift = 0; shift < 32; shift += 8) {
        std::array<std::size_t, 257> count{};
        for (std::size_t i = 0; i < n; ++i) ++count[((keys[i] >> shift) & 0xFF) + 1];
        if (std::any_of(count.begin() + 1, count.end(), [n](std::size_t c) { return c == n; })) continue;
        for (int b = 0; b < 256; ++b) count[b + 1] += count[b];
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t dst = count[(keys[i] >> shift) & 0xFF]++;
            k2[dst] = keys[i];
            i2[dst] = idx[i];
        }
        keys.swap(k2);
        idx.swap(i2);
    }
}

WarpedFrame empty_output(const RgbImage& rgb, const DepthMap& dm) {
    WarpedFrame out;
    out.rgb = RgbImage(rgb.width, rgb.height);
    out.new_depth = DepthMap(dm.width, dm.height, dm.fov_h, dm.fov_v);
    out.valid_mask.assign(rgb.pixel_count(), 0);
    out.fallback_color = mean_color(rgb);
    return out;
}

WarpedFrame passthrough(const RgbImage& rgb, const DepthMap& dm) {
    WarpedFrame out;
    out.rgb = rgb;
    out.new_depth = dm;
    out.valid_mask.assign(rgb.pixel_count(), 1);
    out.fallback_color = mean_color(rgb);
    return out;
}

// Plain floor/ceil for values well inside the int range; avoids libm calls
// when the target lacks SSE4.1 rounding instructions.
inline int ifloor(double v) {
    const int i = static_cast<int>(v);
    return i - (v < i);
}
inline int iceil(double v) {
    const int i = static_cast<int>(v);
    return i + (v > i);
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double centered_col(int col, int width) { return (col + 1) - (width / 2.0 + 0.5); }
double centered_row(int row, int height) { return (row + 1) - (height / 2.0 + 0.5); }

PointCloud depth_to_points(const DepthMap& dm) {
    check_fov(dm.fov_h, dm.fov_v);
    if (dm.width <= 0 || dm.height <= 0) throw InvalidInput("depth_to_points: empty depth map");
    const double kx = std::tan(dm.fov_h / 2) / (dm.width / 2.0);
    const double ky = std::tan(dm.fov_v / 2) / (dm.height / 2.0);
    PointCloud pc;
    pc.width = dm.width;
    pc.height = dm.height;
    const std::size_t n = dm.pixel_count();
    pc.x.resize(n);
    pc.y.resize(n);
    pc.z.resize(n);
    pc.valid.resize(n);
    for (int r = 0; r < dm.height; ++r) {
        for (int c = 0; c < dm.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * dm.width + c;
            const float d = dm.data[i];
            pc.valid[i] = DepthMap::is_valid(d);
            const double z = pc.valid[i] ? d : 0.0;
            pc.x[i] = z * centered_col(c, dm.width) * kx;
            pc.y[i] = z * centered_row(r, dm.height) * ky;
            pc.z[i] = z;
        }
    }
    return pc;
}

bool WarpTransform::is_identity() const { return m == WarpTransform{}.m; }

WarpTransform WarpTransform::operator*(const WarpTransform& o) const {
    WarpTransform r;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += m[i * 4 + k] * o.m[k * 4 + j];
            r.m[i * 4 + j] = s;
        }
    }
    return r;
}

void WarpTransform::apply(double x, double y, double z, double& ox, double& oy, double& oz) const {
    ox = m[0] * x + m[1] * y + m[2] * z + m[3];
    oy = m[4] * x + m[5] * y + m[6] * z + m[7];
    oz = m[8] * x + m[9] * y + m[10] * z + m[11];
}

WarpTransform make_transform(const motion::PoseDelta& delta, double pitch) {
    if (delta.is_zero()) return WarpTransform::identity();
    const double c = std::cos(delta.dpsi), s = std::sin(delta.dpsi);
    // Rotation R (yaw about the down axis, right turn positive) and its transpose.
    const double rt[3][3] = {{c, 0, -s}, {0, 1, 0}, {s, 0, c}};
    const double d[3] = {delta.dx, 0.0, delta.dz};
    WarpTransform t;
    for (int i = 0; i < 3; ++i) {
        double off = 0.0;
        for (int k = 0; k < 3; ++k) {
            t.m[i * 4 + k] = rt[i][k];
            off -= rt[i][k] * d[k];
        }
        t.m[i * 4 + 3] = off;
    }
    if (pitch == 0.0) return t;

    const double cp = std::cos(pitch), sp = std::sin(pitch);
    WarpTransform r2, r2t;
    r2.m = {1, 0, 0, 0, 0, cp, -sp, 0, 0, sp, cp, 0, 0, 0, 0, 1};
    r2t.m = {1, 0, 0, 0, 0, cp, sp, 0, 0, -sp, cp, 0, 0, 0, 0, 1};
    return r2 * t * r2t;
}

PointCloud transform_points(const PointCloud& pc, const WarpTransform& t, double z_near) {
    PointCloud out = pc;
    for (std::size_t i = 0; i < pc.size(); ++i) {
        if (!pc.valid[i]) continue;
        t.apply(pc.x[i], pc.y[i], pc.z[i], out.x[i], out.y[i], out.z[i]);
        if (!(out.z[i] > z_near)) out.valid[i] = 0;
    }
    return out;
}

std::vector<PixelTarget> points_to_pixels(const PointCloud& pc, double fov_h, double fov_v) {
    check_fov(fov_h, fov_v);
    const double fx = (pc.width / 2.0) / std::tan(fov_h / 2);
    const double fy = (pc.height / 2.0) / std::tan(fov_v / 2);
    std::vector<PixelTarget> out(pc.size());
    for (std::size_t i = 0; i < pc.size(); ++i) {
        if (!pc.valid[i] || !(pc.z[i] > 0.0)) continue;
        auto& p = out[i];
        p.col = pc.x[i] / pc.z[i] * fx + (pc.width / 2.0 + 0.5);
        p.row = pc.y[i] / pc.z[i] * fy + (pc.height / 2.0 + 0.5);
        p.z = pc.z[i];
        p.in_frame = p.col >= 0.5 && p.col < pc.width + 0.5 && p.row >= 0.5 && p.row < pc.height + 0.5;
    }
    return out;
}

double pixel_scale(double z_old, double z_new) {
    if (!(z_new > 0.0)) throw InvalidInput("pixel_scale: new depth must be > 0");
    return z_old / z_new;
}

Span pixel_span(double center, double scale) {
    const double half = (scale - 1.0) / 2.0;
    if (!(std::abs(center) + std::abs(half) < 1e9)) throw InvalidInput("pixel_span: center or scale out of range");
    const int a = ifloor(center - half);
    const int b = iceil(center + half);
    // 1-based pixel numbers to 0-based storage.
    return {std::min(a, b) - 1, std::max(a, b) - 1};
}

std::size_t WarpedFrame::valid_count() const {
    return static_cast<std::size_t>(std::count(valid_mask.begin(), valid_mask.end(), std::uint8_t{1}));
}

WarpedFrame render_projection(const RgbImage& rgb, const DepthMap& dm, const WarpTransform& t,
                              const RenderOptions& opts) {
    check_pair(rgb, dm);
    if (rgb.width > 32767 || rgb.height > 32767) throw InvalidInput("frame too large");
    if (t.is_identity()) return passthrough(rgb, dm);

    const int W = rgb.width, H = rgb.height;
    const std::size_t n = rgb.pixel_count();
    const Projector proj{W, H, std::tan(dm.fov_h / 2) / (W / 2.0), std::tan(dm.fov_v / 2) / (H / 2.0), t,
                         opts.z_near};

    // Pass 1: per-pixel destination spans, in parallel over source rows.
    std::vector<Splat> splats(n);
    std::vector<std::uint8_t> hit(n, 0);
    parallel_blocks(static_cast<std::size_t>(H), opts.workers, [&](std::size_t r0, std::size_t r1, int) {
        double z_new;
        for (std::size_t r = r0; r < r1; ++r) {
            for (int c = 0; c < W; ++c) {
                const std::size_t i = r * W + c;
                hit[i] = proj.splat(static_cast<int>(r), c, dm.data[i], splats[i], z_new);
            }
        }
    });

    // Far-to-near order: ascending bit-inverted depth, ties by source index.
    std::vector<std::uint32_t> keys;
    std::vector<std::uint32_t> order;
    keys.reserve(n);
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!hit[i]) continue;
        keys.push_back(~std::bit_cast<std::uint32_t>(splats[i].z));
        order.push_back(static_cast<std::uint32_t>(i));
    }
    radix_sort(keys, order);

    // Pass 2: each worker paints the whole ordered list into its own row band.
    WarpedFrame out = empty_output(rgb, dm);
    parallel_blocks(static_cast<std::size_t>(H), opts.workers, [&](std::size_t band0, std::size_t band1, int) {
        const int b0 = static_cast<int>(band0), b1 = static_cast<int>(band1) - 1;
        for (const std::uint32_t i : order) {
            const Splat& s = splats[i];
            const int r0 = std::max<int>(s.r0, b0), r1 = std::min<int>(s.r1, b1);
            if (r0 > r1) continue;
            const std::uint8_t* src = &rgb.data[static_cast<std::size_t>(i) * 3];
            for (int r = r0; r <= r1; ++r) {
                const std::size_t row = static_cast<std::size_t>(r) * W;
                for (int c = s.c0; c <= s.c1; ++c) {
                    std::uint8_t* dst = &out.rgb.data[(row + c) * 3];
                    dst[0] = src[0];
                    dst[1] = src[1];
                    dst[2] = src[2];
                    out.new_depth.data[row + c] = s.z;
                    out.valid_mask[row + c] = 1;
                }
            }
        }
    });
    return out;
}

WarpedFrame render_projection_zbuffer(const RgbImage& rgb, const DepthMap& dm, const WarpTransform& t,
                                      double z_near) {
    check_pair(rgb, dm);
    if (t.is_identity()) return passthrough(rgb, dm);
    const int W = rgb.width, H = rgb.height;
    const Projector proj{W, H, std::tan(dm.fov_h / 2) / (W / 2.0), std::tan(dm.fov_v / 2) / (H / 2.0), t, z_near};
    WarpedFrame out = empty_output(rgb, dm);
    std::vector<float> zbuf(rgb.pixel_count(), 0.0f);
    std::vector<std::int64_t> owner(rgb.pixel_count(), -1);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * W + c;
            Splat s;
            double z_new;
            if (!proj.splat(r, c, dm.data[i], s, z_new)) continue;
            for (int rr = s.r0; rr <= s.r1; ++rr) {
                for (int cc = s.c0; cc <= s.c1; ++cc) {
                    const std::size_t o = static_cast<std::size_t>(rr) * W + cc;
                    if (owner[o] < 0 || s.z < zbuf[o] || (s.z == zbuf[o] && static_cast<std::int64_t>(i) > owner[o])) {
                        zbuf[o] = s.z;
                        owner[o] = static_cast<std::int64_t>(i);
                    }
                }
            }
        }
    }
    for (std::size_t o = 0; o < owner.size(); ++o) {
        if (owner[o] < 0) continue;
        std::copy_n(&rgb.data[owner[o] * 3], 3, &out.rgb.data[o * 3]);
        out.new_depth.data[o] = zbuf[o];
        out.valid_mask[o] = 1;
    }
    return out;
}

ProjectResult project_frame(const RgbImage& rgb, const DepthMap& dm, const motion::PoseDelta& delta,
                            const motion::VehicleGeometry& geom, const ProjectOptions& opts) {
    check_pair(rgb, dm);
    ProjectResult res;
    const auto t = make_transform(delta, geom.cam_pitch);
    if (t.is_identity()) {
        res.image = rgb;
        res.warped = passthrough(rgb, dm);
        res.passthrough = true;
        return res;
    }
    auto t0 = std::chrono::steady_clock::now();
    res.warped = render_projection(rgb, dm, t, opts.render);
    res.warp_ms = ms_since(t0);
    if (!opts.fill_holes) {
        res.image = res.warped.rgb;
        return res;
    }
    t0 = std::chrono::steady_clock::now();
    auto filled = inpaint(res.warped, opts.inpaint_radius);
    res.inpaint_ms = ms_since(t0);
    res.image = std::move(filled.image);
    res.uniform_fill = filled.uniform_fill;
    return res;
}

}  // namespace ppd::proj
