#pragma once

#include "greenview/nnet.hpp"
#include "greenview/raster.hpp"

namespace greenview {

// Per-pixel contribution intensity in [0,1], at the analyzed image's size.
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

struct GradCamResult {
    Heatmap heatmap;
    int layer_index = 0;    // layer stack index of the analyzed conv layer
    double prediction = 0;  // sigmoid output (predicted GVI)
};

// Gradient-weighted activation map over the regression net: weights are the
// spatial means of d(logit)/dA^k for the chosen conv layer's feature maps
// A^k, and the raw map is ReLU of their weighted sum, max-normalized (an
// all-zero map stays all-zero) and nearest-upsampled to the image size.
// Differentiates the pre-sigmoid logit so the map is invariant to positive
// rescaling of the head. layer_index < 0 selects the last trunk conv layer;
// an index that is not a conv layer is a validation error.
GradCamResult grad_cam(const ConvNet& net, const RgbImage& image, int layer_index = -1);

// Blue-to-red colormap alpha-blended (0.5) over the image.
RgbImage render_overlay(const RgbImage& image, const Heatmap& heatmap);

}  // namespace greenview
