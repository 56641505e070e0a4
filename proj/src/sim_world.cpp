#include "ppd/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <fstream>
#include <sstream>

#include "ppd/config.hpp"
#include "ppd/error.hpp"
#include "ppd/parallel.hpp"

namespace ppd::sim {
namespace {

using std::numbers::pi;

// Appends a straight of length `len` from the last point along `heading`.
void add_straight(std::vector<Vec2>& pts, double& heading, double len, double spacing) {
    const Vec2 p0 = pts.back();
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 1; i <= n; ++i) {
        const double s = len * i / n;
        pts.push_back({p0.x + s * std::cos(heading), p0.y + s * std::sin(heading)});
    }
}

// Appends a circular arc; positive `angle` turns left.
void add_arc(std::vector<Vec2>& pts, double& heading, double radius, double angle, double spacing) {
    const Vec2 p0 = pts.back();
    const double side = angle > 0 ? 1.0 : -1.0;
    const Vec2 center{p0.x - side * radius * std::sin(heading), p0.y + side * radius * std::cos(heading)};
    const double len = radius * std::abs(angle);
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    const double a0 = heading - side * pi / 2;
    for (int i = 1; i <= n; ++i) {
        const double a = a0 + angle * i / n;
        pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    heading += angle;
}

// Smooth lateral shift of `offset` over `len` (raised cosine), heading +x.
void add_shift(std::vector<Vec2>& pts, double len, double offset, double spacing) {
    const Vec2 p0 = pts.back();
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 1; i <= n; ++i) {
        const double u = static_cast<double>(i) / n;
        pts.push_back({p0.x + len * u, p0.y + offset * 0.5 * (1.0 - std::cos(pi * u))});
    }
}

Color parse_color(const std::vector<std::string>& f, std::size_t at, const std::string& key) {
    if (f.size() < at + 3) throw InvalidInput("scene: '" + key + "' needs an r g b color");
    Color c{};
    for (int k = 0; k < 3; ++k) {
        const int v = std::stoi(f[at + k]);
        if (v < 0 || v > 255) throw InvalidInput("scene: color component out of range in '" + key + "'");
        c[k] = static_cast<std::uint8_t>(v);
    }
    return c;
}

Color shade(const Color& c, double k) {
    Color out{};
    for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i] * k), 0L, 255L));
    return out;
}

struct Vec3 {
    double x, y, z;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Color color{};
};

void hit_box(const Box& b, const Vec3& o, const Vec3& d, Hit& best) {
    double tmin = 0.0, tmax = best.t;
    int axis = -1;
    bool negative_side = false;
    const double lo[3] = {b.x0, b.y0, b.z0}, hi[3] = {b.x1, b.y1, b.z1};
    const double oo[3] = {o.x, o.y, o.z}, dd[3] = {d.x, d.y, d.z};
    for (int k = 0; k < 3; ++k) {
        if (dd[k] == 0.0) {
            if (oo[k] < lo[k] || oo[k] > hi[k]) return;
            continue;
        }
        double t0 = (lo[k] - oo[k]) / dd[k], t1 = (hi[k] - oo[k]) / dd[k];
        bool neg = true;
        if (t0 > t1) {
            std::swap(t0, t1);
            neg = false;
        }
        if (t0 > tmin) {
            tmin = t0;
            axis = k;
            negative_side = neg;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return;
    }
    if (axis < 0 || !(tmin < best.t)) return;
    best.t = tmin;
    // Faces are shaded by orientation; walls get a band every meter of height.
    static constexpr double kFace[3][2] = {{0.80, 0.65}, {0.90, 0.72}, {1.0, 1.0}};
    double k = kFace[axis][negative_side ? 0 : 1];
    if (axis != 2) {
        const double z = o.z + tmin * d.z;
        if (std::fmod(z, 1.0) > 0.75) k *= 0.78;
    }
    best.color = shade(b.color, k);
}

void hit_pole(const Pole& p, const Vec3& o, const Vec3& d, Hit& best) {
    const double ox = o.x - p.x, oy = o.y - p.y;
    const double a = d.x * d.x + d.y * d.y;
    if (a == 0.0) return;
    const double b = 2.0 * (ox * d.x + oy * d.y);
    const double c = ox * ox + oy * oy - p.radius * p.radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0.0) return;
    const double t = (-b - std::sqrt(disc)) / (2 * a);
    if (!(t > 0.0) || !(t < best.t)) return;
    const double z = o.z + t * d.z;
    if (z < 0.0 || z > p.height) return;
    best.t = t;
    best.color = p.color;
}

}  // namespace

Track::Track(std::string name, std::vector<Vec2> points) : name_(std::move(name)), pts_(std::move(points)) {
    if (pts_.size() < 2) throw InvalidInput("track needs at least two points");
    arc_.resize(pts_.size());
    for (std::size_t i = 1; i < pts_.size(); ++i) {
        arc_[i] = arc_[i - 1] + std::hypot(pts_[i].x - pts_[i - 1].x, pts_[i].y - pts_[i - 1].y);
    }
    double x0 = pts_[0].x, x1 = x0, y0 = pts_[0].y, y1 = y0;
    for (const auto& p : pts_) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    gx0_ = x0 - cell_;
    gy0_ = y0 - cell_;
    gw_ = static_cast<int>((x1 - gx0_) / cell_) + 2;
    gh_ = static_cast<int>((y1 - gy0_) / cell_) + 2;
    grid_.resize(static_cast<std::size_t>(gw_) * gh_);
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
        const int cx = static_cast<int>((0.5 * (pts_[i].x + pts_[i + 1].x) - gx0_) / cell_);
        const int cy = static_cast<int>((0.5 * (pts_[i].y + pts_[i + 1].y) - gy0_) / cell_);
        grid_[static_cast<std::size_t>(cy) * gw_ + cx].push_back(static_cast<std::uint32_t>(i));
    }
}

Track Track::make(const std::string& name, double spacing) {
    std::vector<Vec2> pts{{0.0, 0.0}};
    double heading = 0.0;
    if (name == "r7_80") {
        add_straight(pts, heading, 20.0, spacing);
        add_arc(pts, heading, 7.0, 80.0 * pi / 180.0, spacing);
        add_straight(pts, heading, 20.0, spacing);
    } else if (name == "r5_120") {
        add_straight(pts, heading, 20.0, spacing);
        add_arc(pts, heading, 5.0, 120.0 * pi / 180.0, spacing);
        add_straight(pts, heading, 20.0, spacing);
    } else if (name == "lane_change") {
        add_straight(pts, heading, 15.0, spacing);
        add_shift(pts, 25.0, 3.5, spacing);
        add_straight(pts, heading, 11.0, spacing);
        add_shift(pts, 25.0, -3.5, spacing);
        add_straight(pts, heading, 15.0, spacing);
    } else {
        throw InvalidInput("unknown track '" + name + "'");
    }
    return Track(name, std::move(pts));
}

std::vector<std::string> Track::names() { return {"r7_80", "r5_120", "lane_change"}; }

Track::Nearest Track::nearest_segment(Vec2 p, std::size_t i) const {
    const Vec2 a = pts_[i], b = pts_[i + 1];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double u = len2 > 0 ? ((p.x - a.x) * ex + (p.y - a.y) * ey) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const Vec2 f{a.x + u * ex, a.y + u * ey};
    Nearest n;
    n.foot = f;
    n.distance = std::hypot(p.x - f.x, p.y - f.y);
    const double cross = ex * (p.y - a.y) - ey * (p.x - a.x);
    n.signed_offset = cross >= 0 ? n.distance : -n.distance;
    n.s = arc_[i] + u * std::sqrt(len2);
    return n;
}

Track::Nearest Track::nearest(Vec2 p) const {
    Nearest best;
    best.distance = std::numeric_limits<double>::infinity();
    const int cx = static_cast<int>(std::floor((p.x - gx0_) / cell_));
    const int cy = static_cast<int>(std::floor((p.y - gy0_) / cell_));
    const auto visit = [&](int gx, int gy) {
        if (gx < 0 || gy < 0 || gx >= gw_ || gy >= gh_) return;
        for (const auto seg : grid_[static_cast<std::size_t>(gy) * gw_ + gx]) {
            const auto n = nearest_segment(p, seg);
            if (n.distance < best.distance) best = n;
        }
    };
    // Rings of cells around p; segments are binned by midpoint, so a ring
    // can only improve on `best` while its inner edge is closer than best + cell.
    constexpr int kMaxRing = 8;
    for (int ring = 0; ring <= kMaxRing; ++ring) {
        if ((ring - 1) * cell_ > best.distance + cell_) return best;
        if (ring == 0) {
            visit(cx, cy);
            continue;
        }
        for (int k = -ring; k <= ring; ++k) {
            visit(cx + k, cy - ring);
            visit(cx + k, cy + ring);
        }
        for (int k = -ring + 1; k <= ring - 1; ++k) {
            visit(cx - ring, cy + k);
            visit(cx + ring, cy + k);
        }
    }
    if ((kMaxRing - 1) * cell_ > best.distance + cell_) return best;
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
        const auto n = nearest_segment(p, i);
        if (n.distance < best.distance) best = n;
    }
    return best;
}

Vec2 Track::point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - arc_.begin() - 1, 0), pts_.size() - 2);
    const double seg = arc_[i + 1] - arc_[i];
    const double u = seg > 0 ? (s - arc_[i]) / seg : 0.0;
    return {pts_[i].x + u * (pts_[i + 1].x - pts_[i].x), pts_[i].y + u * (pts_[i + 1].y - pts_[i].y)};
}

double Track::heading_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - arc_.begin() - 1, 0), pts_.size() - 2);
    return std::atan2(pts_[i + 1].y - pts_[i].y, pts_[i + 1].x - pts_[i].x);
}

double deviation(Vec2 p, const Track& track) { return track.nearest(p).distance; }

void Scene::paint_road(const Track& track, double margin, double cell) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& p : track.points()) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    dcell_ = cell;
    dx0_ = x0 - margin;
    dy0_ = y0 - margin;
    dw_ = static_cast<int>((x1 - x0 + 2 * margin) / cell) + 2;
    dh_ = static_cast<int>((y1 - y0 + 2 * margin) / cell) + 2;
    // Distances are only needed near the road; farther cells keep a cap value.
    const double cap = road_half_width + 2.0;
    dist_.assign(static_cast<std::size_t>(dw_) * dh_, static_cast<float>(cap));
    const auto& pts = track.points();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Vec2 a = pts[k], b = pts[k + 1];
        const int i0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - cap - dx0_) / cell)));
        const int i1 = std::min(dw_ - 1, static_cast<int>(std::ceil((std::max(a.x, b.x) + cap - dx0_) / cell)));
        const int j0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - cap - dy0_) / cell)));
        const int j1 = std::min(dh_ - 1, static_cast<int>(std::ceil((std::max(a.y, b.y) + cap - dy0_) / cell)));
        const double ex = b.x - a.x, ey = b.y - a.y, len2 = ex * ex + ey * ey;
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const double px = dx0_ + i * cell, py = dy0_ + j * cell;
                const double u = len2 > 0 ? std::clamp(((px - a.x) * ex + (py - a.y) * ey) / len2, 0.0, 1.0) : 0.0;
                const double d = std::hypot(px - a.x - u * ex, py - a.y - u * ey);
                float& slot = dist_[static_cast<std::size_t>(j) * dw_ + i];
                slot = std::min(slot, static_cast<float>(d));
            }
        }
    }
}

double Scene::road_distance(double x, double y) const {
    if (dist_.empty()) return std::numeric_limits<double>::infinity();
    const double fx = (x - dx0_) / dcell_, fy = (y - dy0_) / dcell_;
    if (fx < 0 || fy < 0 || fx >= dw_ - 1 || fy >= dh_ - 1) return std::numeric_limits<double>::infinity();
    const int i = static_cast<int>(fx), j = static_cast<int>(fy);
    const double u = fx - i, v = fy - j;
    const auto at = [&](int a, int b) { return static_cast<double>(dist_[static_cast<std::size_t>(b) * dw_ + a]); };
    return (1 - v) * ((1 - u) * at(i, j) + u * at(i + 1, j)) + v * ((1 - u) * at(i, j + 1) + u * at(i + 1, j + 1));
}

Scene Scene::along_track(const Track& track, std::uint64_t seed, int buildings) {
    Scene scene;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::array<Color, 6> palette{{{180, 90, 70}, {200, 190, 160}, {120, 120, 140},
                                        {160, 150, 110}, {210, 140, 90}, {110, 140, 170}}};
    const double len = track.length();
    int placed = 0;
    for (int attempt = 0; attempt < buildings * 20 && placed < buildings; ++attempt) {
        const double s = u01(rng) * len;
        const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
        const double off = 6.0 + 8.0 * u01(rng);
        const double h = track.heading_at(s);
        const Vec2 c0 = track.point_at(s);
        const Vec2 c{c0.x - side * off * std::sin(h), c0.y + side * off * std::cos(h)};
        const double hx = 1.5 + 2.5 * u01(rng), hy = 1.5 + 2.5 * u01(rng);
        // Keep every corner well clear of the road.
        bool clear = true;
        for (double cx : {c.x - hx, c.x, c.x + hx})
            for (double cy : {c.y - hy, c.y, c.y + hy}) clear = clear && deviation({cx, cy}, track) > 4.0;
        if (!clear) continue;
        const double height = 3.0 + 9.0 * u01(rng);
        scene.boxes.push_back({c.x - hx, c.y - hy, 0.0, c.x + hx, c.y + hy, height,
                               palette[static_cast<std::size_t>(u01(rng) * palette.size()) % palette.size()]});
        ++placed;
    }
    for (double s = 4.0; s < len; s += 8.0) {
        const double h = track.heading_at(s);
        const Vec2 c = track.point_at(s);
        const double side = (static_cast<int>(s / 8.0) % 2) ? 1.0 : -1.0;
        const Vec2 p{c.x - side * 3.0 * std::sin(h), c.y + side * 3.0 * std::cos(h)};
        if (deviation(p, track) < 2.5) continue;
        scene.poles.push_back({p.x, p.y, 0.08, 3.5, {60, 60, 60}});
    }
    scene.paint_road(track);
    return scene;
}

Scene Scene::parse(const std::string& text) {
    const auto cfg = KeyValueConfig::parse(text);
    cfg.require_known({"sky", "grass_a", "grass_b", "road", "stripe", "checker", "road_half_width", "sky_distance",
                       "box", "pole", "track", "buildings", "seed"});
    Scene scene;
    if (cfg.has("track")) {
        const auto track = Track::make(cfg.get_string("track", ""));
        scene = along_track(track, static_cast<std::uint64_t>(cfg.get_int("seed", 1)),
                            static_cast<int>(cfg.get_int("buildings", 24)));
    }
    const auto color = [&](const char* key, Color& out) {
        if (cfg.has(key)) out = parse_color(split_fields(cfg.get_string(key, "")), 0, key);
    };
    color("sky", scene.sky);
    color("grass_a", scene.grass_a);
    color("grass_b", scene.grass_b);
    color("road", scene.road);
    color("stripe", scene.stripe);
    scene.checker = cfg.get_double("checker", scene.checker);
    scene.road_half_width = cfg.get_double("road_half_width", scene.road_half_width);
    scene.sky_distance = cfg.get_double("sky_distance", scene.sky_distance);
    if (!(scene.checker > 0) || !(scene.sky_distance > 1)) throw InvalidInput("scene: checker and sky_distance must be positive");
    for (const auto& line : cfg.get_all("box")) {
        const auto f = split_fields(line);
        if (f.size() != 9) throw InvalidInput("scene: box needs x0 y0 z0 x1 y1 z1 r g b");
        Box b{std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]),
              parse_color(f, 6, "box")};
        if (!(b.x0 < b.x1 && b.y0 < b.y1 && b.z0 < b.z1)) throw InvalidInput("scene: box min corner must be below max corner");
        scene.boxes.push_back(b);
    }
    for (const auto& line : cfg.get_all("pole")) {
        const auto f = split_fields(line);
        if (f.size() != 7) throw InvalidInput("scene: pole needs x y radius height r g b");
        Pole p{std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), parse_color(f, 4, "pole")};
        if (!(p.radius > 0 && p.height > 0)) throw InvalidInput("scene: pole radius and height must be positive");
        scene.poles.push_back(p);
    }
    return scene;
}

Scene Scene::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open scene file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

double CameraModel::vertical_fov() const {
    if (fov_v > 0.0) return fov_v;
    return 2.0 * std::atan(std::tan(fov_h / 2) * height / width);
}

void CameraModel::validate() const {
    if (width <= 0 || height <= 0) throw InvalidInput("camera: image size must be positive");
    if (!(fov_h > 0.0 && fov_h < pi)) throw InvalidInput("camera: horizontal FOV must be in (0, pi)");
    const double v = vertical_fov();
    if (!(v > 0.0 && v < pi)) throw InvalidInput("camera: vertical FOV must be in (0, pi)");
}

Frame render(const Scene& scene, const CameraPose& pose, const CameraModel& cam, int workers) {
    cam.validate();
    const int W = cam.width, H = cam.height;
    const double fov_v = cam.vertical_fov();
    const double kx = std::tan(cam.fov_h / 2) / (W / 2.0), ky = std::tan(fov_v / 2) / (H / 2.0);
    const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
    const double ch = std::cos(pose.heading), sh = std::sin(pose.heading);
    const Vec3 right{sh, -ch, 0.0}, fwd{ch, sh, 0.0};
    const Vec3 origin{pose.x, pose.y, pose.height};

    Frame f{RgbImage(W, H), DepthMap(W, H, cam.fov_h, fov_v)};

    parallel_blocks(static_cast<std::size_t>(H), workers, [&](std::size_t r0, std::size_t r1, int) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double yc = ((static_cast<double>(r) + 1) - (H / 2.0 + 0.5)) * ky;
            for (int c = 0; c < W; ++c) {
                const double xc = ((c + 1) - (W / 2.0 + 0.5)) * kx;
                // Camera ray with unit optical-axis component, tilted to the level frame.
                const double lx = xc, ly = cp * yc + sp, lz = -sp * yc + cp;
                const Vec3 d{lx * right.x + lz * fwd.x, lx * right.y + lz * fwd.y, -ly};
                const double dlen = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);

                Hit best;
                best.t = scene.sky_distance / dlen;
                best.color = scene.sky;
                if (d.z < 0.0) {
                    const double t = -origin.z / d.z;
                    if (t < best.t) {
                        best.t = t;
                        const double gx = origin.x + t * d.x, gy = origin.y + t * d.y;
                        const double rd = scene.road_distance(gx, gy);
                        if (rd < scene.stripe_half_width) {
                            best.color = scene.stripe;
                        } else if (rd < scene.road_half_width) {
                            best.color = scene.road;
                        } else {
                            const long ix = std::lround(std::floor(gx / scene.checker));
                            const long iy = std::lround(std::floor(gy / scene.checker));
                            best.color = ((ix + iy) & 1) ? scene.grass_a : scene.grass_b;
                        }
                    }
                }
                for (const auto& b : scene.boxes) hit_box(b, origin, d, best);
                for (const auto& p : scene.poles) hit_pole(p, origin, d, best);

                const std::size_t i = r * W + c;
                std::copy_n(best.color.data(), 3, &f.rgb.data[i * 3]);
                f.depth.data[i] = static_cast<float>(best.t);
            }
        }
    });
    return f;
}

CameraPose camera_for(const motion::WorldPose& axle, const motion::VehicleGeometry& geom, double height) {
    return {axle.x + geom.cam_offset * std::cos(axle.heading), axle.y + geom.cam_offset * std::sin(axle.heading),
            height, axle.heading, geom.cam_pitch};
}

CameraPose move_camera(const CameraPose& from, const motion::PoseDelta& delta) {
    const auto moved = motion::compose({from.x, from.y, from.heading}, {delta.dx, delta.dz, delta.dpsi});
    CameraPose out = from;
    out.x = moved.x;
    out.y = moved.y;
    out.heading = moved.heading;
    return out;
}

PlantState plant_step(const PlantState& s, double steer, double accel, double dt, const motion::VehicleGeometry& geom,
                      double slip) {
    if (!(dt > 0.0)) throw InvalidInput("plant_step: dt must be > 0");
    motion::AxlePose local;
    double speed = s.speed;
    motion::integrate_segment(local, steer, dt, speed, accel, geom, slip);
    return {motion::compose(s.pose, local), speed};
}

Vec2 forward_point(const PlantState& s, const motion::VehicleGeometry& geom, double offset) {
    const double d = geom.wheelbase + offset;
    return {s.pose.x + d * std::cos(s.pose.heading), s.pose.y + d * std::sin(s.pose.heading)};
}

}  // namespace ppd::sim
