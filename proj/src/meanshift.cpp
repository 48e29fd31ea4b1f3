#include "greenview/meanshift.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace greenview {

void MeanShiftParams::validate() const {
    if (h_s <= 0.0 || h_r <= 0.0 || eps <= 0.0) {
        throw ValidationError("mean-shift bandwidths and eps must be > 0");
    }
    if (min_region < 1) throw ValidationError("min_region must be >= 1");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
}

void GreenParams::validate() const {
    if (t_dom < 0.0 || t_excess < 0.0) {
        throw ValidationError("green thresholds must be >= 0");
    }
}

FilterResult meanshift_filter(const RgbImage& img, const MeanShiftParams& p,
                              unsigned parallelism) {
    p.validate();
    const int W = img.width;
    const int H = img.height;
    const LuvImage luv = rgb_to_luv(img);

    FilterResult res;
    res.filtered = LuvImage(W, H);
    res.modes.resize(static_cast<size_t>(W) * H);

    const double hs2 = p.h_s * p.h_s;
    const double hr2 = p.h_r * p.h_r;
    const double eps2 = p.eps * p.eps;

    parallel_for(static_cast<size_t>(W) * H, parallelism, [&](size_t i) {
        const int px = static_cast<int>(i % W);
        const int py = static_cast<int>(i / W);
        double cx = px;
        double cy = py;
        double cL = luv.values[i * 3];
        double cu = luv.values[i * 3 + 1];
        double cv = luv.values[i * 3 + 2];

        for (int iter = 0; iter < p.max_iters; ++iter) {
            int x0 = std::max(0, static_cast<int>(std::ceil(cx - p.h_s)));
            int x1 = std::min(W - 1, static_cast<int>(std::floor(cx + p.h_s)));
            int y0 = std::max(0, static_cast<int>(std::ceil(cy - p.h_s)));
            int y1 = std::min(H - 1, static_cast<int>(std::floor(cy + p.h_s)));

            double sx = 0.0, sy = 0.0, sL = 0.0, su = 0.0, sv = 0.0;
            int64_t count = 0;
            for (int yj = y0; yj <= y1; ++yj) {
                double dy = yj - cy;
                for (int xj = x0; xj <= x1; ++xj) {
                    double dx = xj - cx;
                    if (dx * dx + dy * dy > hs2) continue;
                    size_t j = (static_cast<size_t>(yj) * W + xj) * 3;
                    double dL = luv.values[j] - cL;
                    double du = luv.values[j + 1] - cu;
                    double dv = luv.values[j + 2] - cv;
                    if (dL * dL + du * du + dv * dv > hr2) continue;
                    sx += xj;
                    sy += yj;
                    sL += luv.values[j];
                    su += luv.values[j + 1];
                    sv += luv.values[j + 2];
                    ++count;
                }
            }
            if (count == 0) break;  // window emptied out; current point is the mode
            double inv = 1.0 / static_cast<double>(count);
            double nx = sx * inv, ny = sy * inv;
            double nL = sL * inv, nu = su * inv, nv = sv * inv;
            double shift2 = (nx - cx) * (nx - cx) + (ny - cy) * (ny - cy) +
                            (nL - cL) * (nL - cL) + (nu - cu) * (nu - cu) +
                            (nv - cv) * (nv - cv);
            cx = nx;
            cy = ny;
            cL = nL;
            cu = nu;
            cv = nv;
            if (shift2 < eps2) break;
        }

        res.modes[i] = Mode{static_cast<float>(cx), static_cast<float>(cy),
                            static_cast<float>(cL), static_cast<float>(cu),
                            static_cast<float>(cv)};
        res.filtered.values[i * 3] = static_cast<float>(cL);
        res.filtered.values[i * 3 + 1] = static_cast<float>(cu);
        res.filtered.values[i * 3 + 2] = static_cast<float>(cv);
    });
    return res;
}

namespace {

inline double mode_range_dist2(const Mode& a, const Mode& b) {
    double dL = static_cast<double>(a.L) - b.L;
    double du = static_cast<double>(a.u) - b.u;
    double dv = static_cast<double>(a.v) - b.v;
    return dL * dL + du * du + dv * dv;
}

}  // namespace

Segmentation fuse_regions(const RgbImage& img, const FilterResult& fr,
                          const MeanShiftParams& p) {
    p.validate();
    const int W = img.width;
    const int H = img.height;
    const size_t N = static_cast<size_t>(W) * H;
    if (fr.modes.size() != N) {
        throw ValidationError("filter result does not match image dimensions");
    }
    const double hr2 = p.h_r * p.h_r;

    // 1. connected components over the 4-neighbor grid (strict < h_r)
    std::vector<int32_t> labels(N, -1);
    int32_t next_label = 0;
    std::deque<size_t> queue;
    for (size_t start = 0; start < N; ++start) {
        if (labels[start] != -1) continue;
        int32_t lab = next_label++;
        labels[start] = lab;
        queue.push_back(start);
        while (!queue.empty()) {
            size_t i = queue.front();
            queue.pop_front();
            int x = static_cast<int>(i % W);
            int y = static_cast<int>(i / W);
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= W || ny[k] < 0 || ny[k] >= H) continue;
                size_t j = static_cast<size_t>(ny[k]) * W + nx[k];
                if (labels[j] != -1) continue;
                if (mode_range_dist2(fr.modes[i], fr.modes[j]) < hr2) {
                    labels[j] = lab;
                    queue.push_back(j);
                }
            }
        }
    }

    // 2. per-region stats (sums first, means later)
    struct Acc {
        int64_t count = 0;
        double r = 0, g = 0, b = 0;
        double L = 0, u = 0, v = 0;
        bool alive = true;
    };
    std::vector<Acc> acc(next_label);
    for (size_t i = 0; i < N; ++i) {
        Acc& a = acc[labels[i]];
        a.count++;
        a.r += img.pixels[i * 3];
        a.g += img.pixels[i * 3 + 1];
        a.b += img.pixels[i * 3 + 2];
        a.L += fr.modes[i].L;
        a.u += fr.modes[i].u;
        a.v += fr.modes[i].v;
    }

    // region adjacency
    std::vector<std::set<int32_t>> adj(next_label);
    for (size_t i = 0; i < N; ++i) {
        int x = static_cast<int>(i % W);
        int y = static_cast<int>(i / W);
        if (x + 1 < W) {
            int32_t a = labels[i], b = labels[i + 1];
            if (a != b) {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        if (y + 1 < H) {
            int32_t a = labels[i], b = labels[i + W];
            if (a != b) {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }

    // 3. iteratively merge undersized regions into the adjacent region with
    // the closest mean range vector; smallest region first, ids break ties
    std::vector<int32_t> parent(next_label);
    for (int32_t r = 0; r < next_label; ++r) parent[r] = r;
    auto find_root = [&](int32_t r) {
        while (parent[r] != r) {
            parent[r] = parent[parent[r]];
            r = parent[r];
        }
        return r;
    };
    for (;;) {
        int32_t victim = -1;
        for (int32_t r = 0; r < next_label; ++r) {
            if (!acc[r].alive || acc[r].count >= p.min_region || adj[r].empty()) continue;
            if (victim == -1 || acc[r].count < acc[victim].count) victim = r;
        }
        if (victim == -1) break;

        double vc = static_cast<double>(acc[victim].count);
        double vL = acc[victim].L / vc, vu = acc[victim].u / vc, vv = acc[victim].v / vc;
        int32_t target = -1;
        double best = 0.0;
        for (int32_t nb : adj[victim]) {
            double nc = static_cast<double>(acc[nb].count);
            double dL = acc[nb].L / nc - vL;
            double du = acc[nb].u / nc - vu;
            double dv = acc[nb].v / nc - vv;
            double d2 = dL * dL + du * du + dv * dv;
            if (target == -1 || d2 < best) {
                best = d2;
                target = nb;
            }
        }

        // fold victim into target
        Acc& t = acc[target];
        Acc& v = acc[victim];
        t.count += v.count;
        t.r += v.r;
        t.g += v.g;
        t.b += v.b;
        t.L += v.L;
        t.u += v.u;
        t.v += v.v;
        v.alive = false;
        parent[victim] = target;
        adj[target].erase(victim);
        for (int32_t nb : adj[victim]) {
            if (nb == target) continue;
            adj[nb].erase(victim);
            adj[nb].insert(target);
            adj[target].insert(nb);
        }
        adj[victim].clear();
    }
    for (auto& l : labels) l = find_root(l);

    // 4. compact ids in order of first row-major occurrence
    std::vector<int32_t> remap(next_label, -1);
    int32_t compact = 0;
    for (size_t i = 0; i < N; ++i) {
        if (remap[labels[i]] == -1) remap[labels[i]] = compact++;
    }

    Segmentation seg;
    seg.width = W;
    seg.height = H;
    seg.labels.resize(N);
    seg.regions.resize(compact);
    for (size_t i = 0; i < N; ++i) seg.labels[i] = remap[labels[i]];
    for (int32_t r = 0; r < next_label; ++r) {
        if (remap[r] == -1) continue;
        const Acc& a = acc[r];
        auto& s = seg.regions[remap[r]];
        double c = static_cast<double>(a.count);
        s.pixel_count = a.count;
        s.mean_r = a.r / c;
        s.mean_g = a.g / c;
        s.mean_b = a.b / c;
        s.mean_L = a.L / c;
        s.mean_u = a.u / c;
        s.mean_v = a.v / c;
    }
    return seg;
}

BinaryMask classify_green(const Segmentation& seg, const GreenParams& g) {
    g.validate();
    std::vector<uint8_t> is_green(seg.regions.size());
    for (size_t r = 0; r < seg.regions.size(); ++r) {
        const auto& s = seg.regions[r];
        is_green[r] = (s.mean_g > s.mean_r + g.t_dom) && (s.mean_g > s.mean_b + g.t_dom) &&
                              (2.0 * s.mean_g - s.mean_r - s.mean_b > g.t_excess)
                          ? 1
                          : 0;
    }
    BinaryMask mask(seg.width, seg.height);
    for (size_t i = 0; i < seg.labels.size(); ++i) {
        mask.flags[i] = is_green[seg.labels[i]];
    }
    return mask;
}

double gvi_of_mask(const BinaryMask& mask) {
    if (mask.pixel_count() == 0) return 0.0;
    return static_cast<double>(mask.vegetation_count()) /
           static_cast<double>(mask.pixel_count());
}

BinaryMask segment_vegetation(const RgbImage& img, const MeanShiftParams& mp,
                              const GreenParams& gp, unsigned parallelism) {
    FilterResult fr = meanshift_filter(img, mp, parallelism);
    Segmentation seg = fuse_regions(img, fr, mp);
    return classify_green(seg, gp);
}

}  // namespace greenview
