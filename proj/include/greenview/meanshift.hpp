#pragma once

#include <cstdint>
#include <vector>

#include "greenview/raster.hpp"

namespace greenview {

// Joint spatial-range mean-shift parameters. Defaults are calibration
// knobs, not ground truth; expose them on the CLI.
struct MeanShiftParams {
    double h_s = 7.0;      // spatial bandwidth, pixels
    double h_r = 6.5;      // range bandwidth, L*u*v* units
    int min_region = 20;   // regions smaller than this merge into a neighbor
    int max_iters = 20;
    double eps = 0.1;      // convergence threshold on the joint-space shift

    void validate() const;
};

// Converged joint-space mode for one pixel.
struct Mode {
    float x, y;      // spatial component
    float L, u, v;   // range component
};

struct FilterResult {
    LuvImage filtered;        // per-pixel mode range values
    std::vector<Mode> modes;  // row-major, one per pixel
};

// Per-pixel region labels plus per-region statistics.
struct Segmentation {
    int width = 0;
    int height = 0;
    std::vector<int32_t> labels;  // dense region ids 0..R-1, row-major

    struct RegionStats {
        int64_t pixel_count = 0;
        double mean_r = 0.0, mean_g = 0.0, mean_b = 0.0;  // original image RGB
        double mean_L = 0.0, mean_u = 0.0, mean_v = 0.0;  // mode range values
    };
    std::vector<RegionStats> regions;

    size_t region_count() const { return regions.size(); }
};

// Green-patch classification thresholds (8-bit RGB units).
struct GreenParams {
    double t_dom = 10.0;     // green must exceed red and blue by more than this
    double t_excess = 20.0;  // 2g - r - b must exceed this

    void validate() const;
};

// Iterates each pixel's joint (x, y, L, u, v) point to the mean of the
// window {spatial distance <= h_s AND range distance <= h_r} until the
// joint shift drops below eps or max_iters is reached. Uniform (flat)
// kernel. Parallel over pixels; output independent of thread count.
FilterResult meanshift_filter(const RgbImage& img, const MeanShiftParams& p,
                              unsigned parallelism = 1);

// Connected components over the 4-neighbor grid joining pixels whose mode
// range distance is < h_r, then iterative merging of regions smaller than
// min_region into the adjacent region with the closest mean range vector.
// Region ids are contiguous in order of first row-major occurrence.
Segmentation fuse_regions(const RgbImage& img, const FilterResult& fr,
                          const MeanShiftParams& p);

// A region is vegetation iff mean g > mean r + t_dom AND mean g > mean b +
// t_dom AND 2*mean g - mean r - mean b > t_excess (strict inequalities).
BinaryMask classify_green(const Segmentation& seg, const GreenParams& g);

// Vegetation pixel fraction.
double gvi_of_mask(const BinaryMask& mask);

// Full baseline: filter -> fuse -> classify.
BinaryMask segment_vegetation(const RgbImage& img, const MeanShiftParams& mp,
                              const GreenParams& gp, unsigned parallelism = 1);

}  // namespace greenview
