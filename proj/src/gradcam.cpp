#include "greenview/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "greenview/errors.hpp"

namespace greenview {

GradCamResult grad_cam(const ConvNet& net, const RgbImage& image, int layer_index) {
    if (net.config().head != HeadKind::Regression) {
        throw ValidationError("grad_cam requires the regression head");
    }
    auto conv_idx = net.conv_layer_indices();
    if (layer_index < 0) {
        layer_index = conv_idx.back();
    } else if (std::find(conv_idx.begin(), conv_idx.end(), layer_index) == conv_idx.end()) {
        throw ValidationError("layer index " + std::to_string(layer_index) +
                              " is not a convolutional layer");
    }

    RgbImage sized = resize_nearest(image, net.config().input_w, net.config().input_h);
    ForwardCache cache;
    GradStore grads;
    Tensor out = net.forward(image_to_tensor(sized), cache);
    net.backward_from_logit(cache, grads);

    const Tensor& act = cache.layers[layer_index].output;       // A^k, (1,C,h,w)
    const Tensor& dact = cache.layers[layer_index].grad_output; // d logit / d A^k
    const int C = act.shape[1], h = act.shape[2], w = act.shape[3];
    const size_t plane = static_cast<size_t>(h) * w;

    // alpha_k = spatial mean of the gradient per feature map
    std::vector<double> alpha(C);
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        const float* g = dact.data.data() + c * plane;
        for (size_t i = 0; i < plane; ++i) s += g[i];
        alpha[c] = s / static_cast<double>(plane);
    }

    // raw map = ReLU(sum_k alpha_k A^k), then max-normalize
    std::vector<float> raw(plane, 0.0f);
    for (size_t i = 0; i < plane; ++i) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += alpha[c] * act.data[c * plane + i];
        raw[i] = s > 0.0 ? static_cast<float>(s) : 0.0f;
    }
    float maxv = *std::max_element(raw.begin(), raw.end());
    if (maxv > 0.0f) {
        for (auto& v : raw) v /= maxv;
    }

    // nearest-neighbor upsample to the analyzed image's dimensions
    GradCamResult res;
    res.layer_index = layer_index;
    res.prediction = out.data[0];
    res.heatmap.width = image.width;
    res.heatmap.height = image.height;
    res.heatmap.values.resize(static_cast<size_t>(image.width) * image.height);
    for (int y = 0; y < image.height; ++y) {
        int sy = static_cast<int>(static_cast<int64_t>(y) * h / image.height);
        for (int x = 0; x < image.width; ++x) {
            int sx = static_cast<int>(static_cast<int64_t>(x) * w / image.width);
            res.heatmap.values[res.heatmap.idx(x, y)] = raw[static_cast<size_t>(sy) * w + sx];
        }
    }
    return res;
}

RgbImage render_overlay(const RgbImage& image, const Heatmap& heatmap) {
    if (image.width != heatmap.width || image.height != heatmap.height) {
        throw ValidationError("heatmap dimensions do not match image");
    }
    RgbImage out(image.width, image.height);
    for (size_t i = 0; i < image.pixel_count(); ++i) {
        float t = heatmap.values[i];
        float cr = 255.0f * t;
        float cb = 255.0f * (1.0f - t);
        out.pixels[i * 3] = static_cast<uint8_t>(0.5f * image.pixels[i * 3] + 0.5f * cr);
        out.pixels[i * 3 + 1] = static_cast<uint8_t>(0.5f * image.pixels[i * 3 + 1]);
        out.pixels[i * 3 + 2] = static_cast<uint8_t>(0.5f * image.pixels[i * 3 + 2] + 0.5f * cb);
    }
    return out;
}

}  // namespace greenview
