#include "greenview/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "greenview/errors.hpp"

namespace greenview {

ImageEval eval_pair(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.width != truth.width || pred.height != truth.height) {
        throw ValidationError("mask dimension mismatch in eval_pair");
    }
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    const size_t n = pred.flags.size();
    for (size_t i = 0; i < n; ++i) {
        bool p = pred.flags[i] != 0;
        bool t = truth.flags[i] != 0;
        if (p && t) ++tp;
        else if (p) ++fp;
        else if (t) ++fn;
        else ++tn;
    }
    ImageEval e;
    e.tp = tp;
    e.fp = fp;
    e.fn = fn;
    e.tn = tn;
    int64_t denom = tp + fp + fn;
    e.iou = denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
    double m = static_cast<double>(n);
    e.gvi_pred = static_cast<double>(tp + fp) / m;
    e.gvi_true = static_cast<double>(tp + fn) / m;
    e.delta = e.gvi_pred - e.gvi_true;
    return e;
}

double mean_iou(const std::vector<ImageEval>& evals) {
    if (evals.empty()) throw ValidationError("mean_iou over empty list");
    double sum = 0.0;
    for (const auto& e : evals) {
        if (!e.iou) throw ValidationError("mean_iou over GVI-only eval (no masks)");
        sum += *e.iou;
    }
    return sum / static_cast<double>(evals.size());
}

double mean_abs_error(const std::vector<ImageEval>& evals) {
    if (evals.empty()) throw ValidationError("mean_abs_error over empty list");
    double sum = 0.0;
    for (const auto& e : evals) sum += std::abs(e.delta);
    return sum / static_cast<double>(evals.size());
}

double pearson_r(const std::vector<double>& pred_gvis,
                 const std::vector<double>& true_gvis) {
    if (pred_gvis.size() != true_gvis.size()) {
        throw ValidationError("pearson_r vector length mismatch");
    }
    size_t n = pred_gvis.size();
    if (n < 2) throw ValidationError("pearson_r requires n >= 2");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += pred_gvis[i];
        my += true_gvis[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = pred_gvis[i] - mx;
        double dy = true_gvis[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw ValidationError("pearson_r undefined: constant input vector");
    }
    return sxy / std::sqrt(sxx * syy);
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
    double pos = p * static_cast<double>(sorted.size() - 1);
    size_t i = static_cast<size_t>(pos);
    if (i + 1 >= sorted.size()) return sorted.back();
    double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

}  // namespace

std::pair<double, double> error_band(std::vector<double> deltas, double lo, double hi) {
    if (deltas.size() < 2) throw ValidationError("error_band requires n >= 2");
    std::sort(deltas.begin(), deltas.end());
    return {quantile_sorted(deltas, lo), quantile_sorted(deltas, hi)};
}

EvalReport make_report(std::vector<ImageEval> evals, bool has_masks) {
    if (evals.empty()) throw ValidationError("empty evaluation list");
    std::sort(evals.begin(), evals.end(),
              [](const ImageEval& a, const ImageEval& b) { return a.image_id < b.image_id; });
    EvalReport rep;
    rep.n = evals.size();
    if (has_masks) rep.mean_iou = mean_iou(evals);
    rep.mean_abs_error = mean_abs_error(evals);
    std::vector<double> preds, truths, deltas;
    preds.reserve(evals.size());
    truths.reserve(evals.size());
    deltas.reserve(evals.size());
    for (const auto& e : evals) {
        preds.push_back(e.gvi_pred);
        truths.push_back(e.gvi_true);
        deltas.push_back(e.delta);
    }
    try {
        rep.pearson_r = pearson_r(preds, truths);
    } catch (const ValidationError&) {
        rep.pearson_r.reset();
    }
    if (deltas.size() >= 2) {
        auto band = error_band(deltas);
        rep.err_q05 = band.first;
        rep.err_q95 = band.second;
    } else {
        rep.err_q05 = rep.err_q95 = deltas.front();
    }
    rep.per_image = std::move(evals);
    return rep;
}

}  // namespace greenview
