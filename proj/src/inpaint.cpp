#include <algorithm>
#include <cmath>
#include <queue>

#include "ppd/projection.hpp"

namespace ppd::proj {
namespace {

enum Flag : std::uint8_t { kKnown = 0, kBand = 1, kInside = 2 };

constexpr float kFar = 1e6f;

struct Grid {
    int w, h;
    std::vector<std::uint8_t> flag;
    std::vector<float> t;

    bool in(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
    std::size_t at(int r, int c) const { return static_cast<std::size_t>(r) * w + c; }
    bool known(int r, int c) const { return in(r, c) && flag[at(r, c)] == kKnown; }
    float tv(int r, int c) const { return t[at(r, c)]; }

    // Upwind eikonal update from two orthogonal neighbors.
    float solve(int r1, int c1, int r2, int c2) const {
        const bool k1 = known(r1, c1), k2 = known(r2, c2);
        if (k1 && k2) {
            const float t1 = tv(r1, c1), t2 = tv(r2, c2);
            const float d = t1 - t2;
            if (std::abs(d) < 1.0f) {
                const float r = std::sqrt(2.0f - d * d);
                float s = (t1 + t2 - r) * 0.5f;
                if (s >= t1 && s >= t2) return s;
                s += r;
                if (s >= t1 && s >= t2) return s;
            }
            return 1.0f + std::min(t1, t2);
        }
        if (k1) return 1.0f + tv(r1, c1);
        if (k2) return 1.0f + tv(r2, c2);
        return kFar;
    }

    // Central (or one-sided) difference of T over pixels that are not inside.
    float grad(int r, int c, int dr, int dc) const {
        const bool a = in(r + dr, c + dc) && flag[at(r + dr, c + dc)] != kInside;
        const bool b = in(r - dr, c - dc) && flag[at(r - dr, c - dc)] != kInside;
        const float t0 = tv(r, c);
        if (a && b) return 0.5f * (tv(r + dr, c + dc) - tv(r - dr, c - dc));
        if (a) return tv(r + dr, c + dc) - t0;
        if (b) return t0 - tv(r - dr, c - dc);
        return 0.0f;
    }
};

struct Entry {
    float t;
    std::uint32_t idx;
    bool operator>(const Entry& o) const { return t != o.t ? t > o.t : idx > o.idx; }
};

}  // namespace

InpaintResult inpaint(const WarpedFrame& frame, int radius) {
    InpaintResult res;
    res.image = frame.rgb;
    const int W = frame.rgb.width, H = frame.rgb.height;
    const std::size_t n = frame.rgb.pixel_count();
    if (radius < 1) radius = 1;

    const std::size_t valid = frame.valid_count();
    if (valid == n) return res;
    if (valid == 0) {
        for (std::size_t i = 0; i < n; ++i) std::copy_n(frame.fallback_color.data(), 3, &res.image.data[i * 3]);
        res.uniform_fill = true;
        return res;
    }

    Grid g{W, H, std::vector<std::uint8_t>(n), std::vector<float>(n, 0.0f)};
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (std::size_t i = 0; i < n; ++i) {
        if (!frame.valid_mask[i]) {
            g.flag[i] = kInside;
            g.t[i] = kFar;
        }
    }
    // Known pixels touching the hole form the initial narrow band at T = 0.
    constexpr int dr4[4] = {-1, 0, 1, 0};
    constexpr int dc4[4] = {0, -1, 0, 1};
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const std::size_t i = g.at(r, c);
            if (g.flag[i] != kKnown) continue;
            for (int k = 0; k < 4; ++k) {
                const int rr = r + dr4[k], cc = c + dc4[k];
                if (g.in(rr, cc) && g.flag[g.at(rr, cc)] == kInside) {
                    g.flag[i] = kBand;
                    heap.push({0.0f, static_cast<std::uint32_t>(i)});
                    break;
                }
            }
        }
    }

    struct Offset {
        int dr, dc;
        std::ptrdiff_t lin;
        float inv_len, inv_len2;
    };
    std::vector<Offset> offsets;
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            const int len2 = dr * dr + dc * dc;
            if (len2 != 0 && len2 <= radius * radius) {
                offsets.push_back({dr, dc, static_cast<std::ptrdiff_t>(dr) * W + dc,
                                   1.0f / std::sqrt(static_cast<float>(len2)), 1.0f / static_cast<float>(len2)});
            }
        }
    }

    while (!heap.empty()) {
        const Entry e = heap.top();
        heap.pop();
        const int r = static_cast<int>(e.idx / W), c = static_cast<int>(e.idx % W);
        if (g.flag[e.idx] == kKnown) continue;
        g.flag[e.idx] = kKnown;

        for (int k = 0; k < 4; ++k) {
            const int i = r + dr4[k], j = c + dc4[k];
            if (!g.in(i, j) || g.flag[g.at(i, j)] != kInside) continue;
            const std::size_t q = g.at(i, j);
            g.t[q] = std::min({g.solve(i - 1, j, i, j - 1), g.solve(i + 1, j, i, j - 1), g.solve(i - 1, j, i, j + 1),
                               g.solve(i + 1, j, i, j + 1)});

            const float gr = g.grad(i, j, 1, 0), gc = g.grad(i, j, 0, 1);
            const float tq = g.t[q];
            const bool interior = i >= radius && i < H - radius && j >= radius && j < W - radius;
            float acc[3] = {0, 0, 0};
            float wsum = 0.0f;
            for (const auto& o : offsets) {
                if (!interior && !g.in(i + o.dr, j + o.dc)) continue;
                const std::size_t p = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(q) + o.lin);
                if (g.flag[p] == kInside) continue;
                // The direction term only needs |r . grad T|, so the sign of r is irrelevant.
                const float dir = std::max(std::abs(static_cast<float>(o.dr) * gr + static_cast<float>(o.dc) * gc) * o.inv_len,
                                           1e-6f);
                const float lev = 1.0f / (1.0f + std::abs(g.t[p] - tq));
                const float wgt = dir * o.inv_len2 * lev;
                const std::uint8_t* px = &res.image.data[p * 3];
                acc[0] += wgt * px[0];
                acc[1] += wgt * px[1];
                acc[2] += wgt * px[2];
                wsum += wgt;
            }
            std::uint8_t* out = &res.image.data[q * 3];
            if (wsum > 0.0f) {
                for (int ch = 0; ch < 3; ++ch) {
                    out[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(acc[ch] / wsum), 0L, 255L));
                }
            }
            g.flag[q] = kBand;
            heap.push({g.t[q], static_cast<std::uint32_t>(q)});
        }
    }
    return res;
}

}  // namespace ppd::proj
