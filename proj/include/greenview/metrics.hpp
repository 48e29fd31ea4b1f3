#pragma once

#include <optional>
#include <string>
#include <vector>

#include "greenview/raster.hpp"

namespace greenview {

// Pixel-level comparison of one predicted mask against its label.
// For GVI-only predictors the count/IoU fields are absent.
struct ImageEval {
    std::string image_id;
    std::optional<int64_t> tp, fp, fn, tn;
    std::optional<double> iou;
    double gvi_true = 0.0;
    double gvi_pred = 0.0;
    double delta = 0.0;  // gvi_pred - gvi_true
};

struct EvalReport {
    size_t n = 0;
    std::optional<double> mean_iou;  // absent for GVI-only predictors
    double mean_abs_error = 0.0;
    std::optional<double> pearson_r;  // absent when correlation is undefined
    double err_q05 = 0.0;
    double err_q95 = 0.0;
    std::vector<ImageEval> per_image;
};

// Pixelwise confusion counts and vegetation-class IoU for one mask pair.
// Both-empty masks score IoU 1.0 (perfect agreement).
ImageEval eval_pair(const BinaryMask& pred, const BinaryMask& truth);

double mean_iou(const std::vector<ImageEval>& evals);
double mean_abs_error(const std::vector<ImageEval>& evals);

// Sample Pearson correlation. Throws ValidationError when n < 2 or either
// vector is constant (correlation undefined).
double pearson_r(const std::vector<double>& pred_gvis,
                 const std::vector<double>& true_gvis);

// Linear-interpolation quantiles (inclusive rule, position p*(n-1)) of the
// signed deltas. Requires n >= 2.
std::pair<double, double> error_band(std::vector<double> deltas,
                                     double lo = 0.05, double hi = 0.95);

// Aggregates per-image evals into a report. has_masks controls whether the
// IoU column is populated; pearson_r is omitted (not an error) when the
// inputs make it undefined.
EvalReport make_report(std::vector<ImageEval> evals, bool has_masks);

}  // namespace greenview
