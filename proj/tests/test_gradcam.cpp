#include <doctest.h>

#include <cmath>

#include "greenview/errors.hpp"
#include "greenview/gradcam.hpp"
#include "greenview/util.hpp"

using namespace greenview;

namespace {

NetConfig cam_config(int blocks = 2) {
    NetConfig cfg;
    cfg.input_h = 16;
    cfg.input_w = 16;
    cfg.conv_channels = blocks == 1 ? std::vector<int>{1} : std::vector<int>{3, 4};
    cfg.head = HeadKind::Regression;
    cfg.init_seed = 6;
    return cfg;
}

RgbImage noisy_image(uint64_t seed, int w = 16, int h = 16) {
    Rng rng(seed);
    RgbImage img(w, h);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
    return img;
}

}  // namespace

TEST_CASE("single feature map with uniform positive weight reproduces the map") {
    ConvNet net(cam_config(1));
    auto& blocks = net.param_blocks();
    // head dense weight = 1 -> d logit / dA is uniformly 1/(h*w) > 0,
    // so the heatmap is the max-normalized positive part of A itself
    std::fill(blocks[2].values.begin(), blocks[2].values.end(), 1.0f);
    std::fill(blocks[3].values.begin(), blocks[3].values.end(), 0.0f);

    RgbImage img = noisy_image(8);
    GradCamResult res = grad_cam(net, img);

    ForwardCache cache;
    net.forward(image_to_tensor(img), cache);
    const Tensor& act = cache.layers[0].output;  // the conv layer's output
    REQUIRE(act.shape[1] == 1);
    int h = act.shape[2], w = act.shape[3];
    float maxpos = 0.0f;
    for (float v : act.data) maxpos = std::max(maxpos, v);
    REQUIRE(maxpos > 0.0f);
    for (int y = 0; y < res.heatmap.height; ++y) {
        for (int x = 0; x < res.heatmap.width; ++x) {
            int sy = static_cast<int>(static_cast<int64_t>(y) * h / res.heatmap.height);
            int sx = static_cast<int>(static_cast<int64_t>(x) * w / res.heatmap.width);
            float a = act.at(0, 0, sy, sx);
            float expect = a > 0.0f ? a / maxpos : 0.0f;
            CHECK(res.heatmap.values[res.heatmap.idx(x, y)] ==
                  doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("zero head weights give an all-zero heatmap") {
    ConvNet net(cam_config());
    auto& blocks = net.param_blocks();
    auto conv_idx = net.conv_layer_indices();
    std::fill(blocks[blocks.size() - 2].values.begin(), blocks[blocks.size() - 2].values.end(),
              0.0f);
    std::fill(blocks[blocks.size() - 1].values.begin(), blocks[blocks.size() - 1].values.end(),
              0.0f);
    GradCamResult res = grad_cam(net, noisy_image(3), conv_idx.back());
    for (float v : res.heatmap.values) CHECK(v == 0.0f);
}

TEST_CASE("heatmap is invariant to positive rescaling of the head") {
    ConvNet net(cam_config());
    RgbImage img = noisy_image(5);
    GradCamResult base = grad_cam(net, img);

    for (float c : {3.0f, 0.25f}) {
        ConvNet scaled = net;
        auto& sb = scaled.param_blocks();
        for (auto& v : sb[sb.size() - 2].values) v = v * c;
        for (auto& v : sb[sb.size() - 1].values) v = v * c;
        GradCamResult res = grad_cam(scaled, img);
        REQUIRE(res.heatmap.values.size() == base.heatmap.values.size());
        for (size_t i = 0; i < res.heatmap.values.size(); ++i) {
            CHECK(res.heatmap.values[i] == doctest::Approx(base.heatmap.values[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("heatmap bounds, dims, and layer validation") {
    ConvNet net(cam_config());
    RgbImage img = noisy_image(9, 20, 12);  // analysis image larger than net input
    GradCamResult res = grad_cam(net, img);
    CHECK(res.heatmap.width == 20);
    CHECK(res.heatmap.height == 12);
    for (float v : res.heatmap.values) {
        CHECK(v >= 0.0f);  // ReLU property: never negative
        CHECK(v <= 1.0f);
    }
    CHECK(res.prediction > 0.0);
    CHECK(res.prediction < 1.0);

    CHECK_THROWS_AS(grad_cam(net, img, 1), ValidationError);  // relu layer
    CHECK_THROWS_AS(grad_cam(net, img, 99), ValidationError);

    NetConfig seg_cfg = cam_config();
    seg_cfg.head = HeadKind::Segmentation;
    ConvNet seg(seg_cfg);
    CHECK_THROWS_AS(grad_cam(seg, img), ValidationError);
}

TEST_CASE("render_overlay colormap floor, ceiling and dim checks") {
    RgbImage img(4, 4);
    for (auto& p : img.pixels) p = 100;

    Heatmap zero;
    zero.width = zero.height = 4;
    zero.values.assign(16, 0.0f);
    RgbImage blue = render_overlay(img, zero);
    CHECK(blue.width == 4);
    CHECK(blue.b(0, 0) == static_cast<uint8_t>(0.5 * 100 + 0.5 * 255));
    CHECK(blue.r(0, 0) == 50);

    Heatmap one = zero;
    one.values.assign(16, 1.0f);
    RgbImage red = render_overlay(img, one);
    CHECK(red.r(0, 0) == static_cast<uint8_t>(0.5 * 100 + 0.5 * 255));
    CHECK(red.b(0, 0) == 50);

    Heatmap wrong;
    wrong.width = 3;
    wrong.height = 4;
    wrong.values.assign(12, 0.0f);
    CHECK_THROWS_AS(render_overlay(img, wrong), ValidationError);
}
