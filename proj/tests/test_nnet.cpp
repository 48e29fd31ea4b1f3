#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "greenview/errors.hpp"
#include "greenview/nnet.hpp"
#include "greenview/util.hpp"

using namespace greenview;
namespace fs = std::filesystem;

namespace {

NetConfig tiny_config(HeadKind head) {
    NetConfig cfg;
    cfg.input_h = 8;
    cfg.input_w = 8;
    cfg.input_ch = 3;
    cfg.conv_channels = {3, 4};
    cfg.head = head;
    cfg.init_seed = 12;
    return cfg;
}

Tensor random_batch(Rng& rng, int n, const NetConfig& cfg) {
    Tensor t({n, cfg.input_ch, cfg.input_h, cfg.input_w});
    for (auto& v : t.data) v = static_cast<float>(rng.uniform());
    return t;
}

double loss_of(const ConvNet& net, const Tensor& batch, const Tensor& labels, bool seg) {
    ForwardCache cache;
    Tensor pred = net.forward(batch, cache);
    Tensor dpred;
    return seg ? bce_loss(pred, labels, dpred) : mse_loss(pred, labels, dpred);
}

// Central differences are only meaningful where the loss is smooth: a pool
// argmax or relu sign flip inside the +-h interval invalidates the estimate.
// A single +-1e-3 weight step moves any activation by < 6e-3 here, so a
// margin of 0.01 on every pool window guarantees smoothness.
double min_smoothness_margin(const ConvNet& net, ForwardCache& cache) {
    double worst = 1e9;
    for (int i = 0; i < net.layer_count(); ++i) {
        if (net.layer_kind(i) != "pool") continue;
        const Tensor& relu_out = cache.layers[i - 1].output;
        const Tensor& conv_out = cache.layers[i - 2].output;
        int N = relu_out.shape[0], C = relu_out.shape[1];
        int H = relu_out.shape[2], W = relu_out.shape[3];
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                for (int y = 0; y < H; y += 2) {
                    for (int x = 0; x < W; x += 2) {
                        float v[4] = {relu_out.at(n, c, y, x), relu_out.at(n, c, y, x + 1),
                                      relu_out.at(n, c, y + 1, x),
                                      relu_out.at(n, c, y + 1, x + 1)};
                        float m1 = -1e9f, m2 = -1e9f;
                        for (float t : v) {
                            if (t > m1) {
                                m2 = m1;
                                m1 = t;
                            } else if (t > m2) {
                                m2 = t;
                            }
                        }
                        if (m1 <= 0.0f) {
                            // fully clipped window: pre-relu values must sit
                            // strictly below zero
                            worst = std::min(worst, -static_cast<double>(conv_out.at(n, c, y, x)));
                            worst = std::min(worst,
                                             -static_cast<double>(conv_out.at(n, c, y, x + 1)));
                            worst = std::min(worst,
                                             -static_cast<double>(conv_out.at(n, c, y + 1, x)));
                            worst = std::min(
                                worst, -static_cast<double>(conv_out.at(n, c, y + 1, x + 1)));
                        } else {
                            worst = std::min(worst, static_cast<double>(m1 - m2));
                            worst = std::min(worst, static_cast<double>(m1));
                        }
                    }
                }
            }
        }
    }
    return worst;
}

// Central finite differences over every parameter; returns the worst
// relative error |analytic - fd| / max(1, |fd|).
double worst_gradient_error(ConvNet& net, const Tensor& batch, const Tensor& labels,
                            bool seg) {
    ForwardCache cache;
    GradStore grads;
    Tensor pred = net.forward(batch, cache);
    Tensor dpred;
    if (seg) {
        bce_loss(pred, labels, dpred);
    } else {
        mse_loss(pred, labels, dpred);
    }
    net.backward(dpred, cache, grads);

    const double h = 1e-3;
    double worst = 0.0;
    auto& blocks = net.param_blocks();
    for (size_t b = 0; b < blocks.size(); ++b) {
        for (size_t j = 0; j < blocks[b].values.size(); ++j) {
            float saved = blocks[b].values[j];
            blocks[b].values[j] = static_cast<float>(saved + h);
            double hi_val = static_cast<double>(blocks[b].values[j]);
            double lp = loss_of(net, batch, labels, seg);
            blocks[b].values[j] = static_cast<float>(saved - h);
            double lo_val = static_cast<double>(blocks[b].values[j]);
            double lm = loss_of(net, batch, labels, seg);
            blocks[b].values[j] = saved;
            double fd = (lp - lm) / (hi_val - lo_val);  // effective float32 step
            double err = std::abs(static_cast<double>(grads[b][j]) - fd) /
                         std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("zero weights and bias give sigmoid(0) = 0.5 for any input") {
    ConvNet net(tiny_config(HeadKind::Regression));
    for (auto& b : net.param_blocks()) {
        std::fill(b.values.begin(), b.values.end(), 0.0f);
    }
    Rng rng(4);
    ForwardCache cache;
    Tensor out = net.forward(random_batch(rng, 3, net.config()), cache);
    REQUIRE(out.size() == 3);
    for (float v : out.data) CHECK(v == 0.5f);
}

TEST_CASE("hand-wired pass-through pipes sigmoid of the input value") {
    NetConfig cfg;
    cfg.input_h = 2;
    cfg.input_w = 2;
    cfg.input_ch = 3;
    cfg.conv_channels = {1};
    cfg.head = HeadKind::Segmentation;
    ConvNet net(cfg);
    auto& blocks = net.param_blocks();
    // conv0: 1 output channel, center tap of input channel 0 only
    std::fill(blocks[0].values.begin(), blocks[0].values.end(), 0.0f);
    blocks[0].values[4] = 1.0f;  // (ic=0, ky=1, kx=1)
    std::fill(blocks[1].values.begin(), blocks[1].values.end(), 0.0f);
    // head: 1x1 conv identity
    blocks[2].values[0] = 1.0f;
    blocks[3].values[0] = 0.0f;

    Tensor in({1, 3, 2, 2});
    in.fill(0.73f);
    ForwardCache cache;
    Tensor out = net.forward(in, cache);
    float expect = 1.0f / (1.0f + std::exp(-0.73f));
    REQUIRE(out.size() == 4);  // upsampled back to 2x2
    for (float v : out.data) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("analytic gradients match central finite differences (both heads)") {
    {
        NetConfig cfg = tiny_config(HeadKind::Regression);
        cfg.init_seed = 4;
        ConvNet net(cfg);
        Rng rng(4);
        Tensor batch = random_batch(rng, 2, net.config());
        Tensor labels({2, 1});
        labels.data = {0.3f, 0.7f};

        ForwardCache cache;
        net.forward(batch, cache);
        REQUIRE(min_smoothness_margin(net, cache) > 0.01);

        double err = worst_gradient_error(net, batch, labels, false);
        CHECK(err < 1e-3);
    }
    {
        NetConfig cfg = tiny_config(HeadKind::Segmentation);
        cfg.init_seed = 4;
        ConvNet net(cfg);
        Rng rng(4);
        Tensor batch = random_batch(rng, 2, net.config());
        Tensor labels({2, 1, 8, 8});
        for (auto& v : labels.data) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;

        ForwardCache cache;
        net.forward(batch, cache);
        REQUIRE(min_smoothness_margin(net, cache) > 0.01);

        double err = worst_gradient_error(net, batch, labels, true);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("backward is linear in the loss gradient") {
    ConvNet net(tiny_config(HeadKind::Regression));
    Rng rng(33);
    Tensor batch = random_batch(rng, 2, net.config());
    ForwardCache cache;
    Tensor out = net.forward(batch, cache);

    GradStore g_zero, g_one, g_two;
    Tensor zero(out.shape);
    net.backward(zero, cache, g_zero);
    for (const auto& blk : g_zero)
        for (float v : blk) CHECK(v == 0.0f);

    Tensor one(out.shape);
    one.fill(0.37f);
    net.backward(one, cache, g_one);
    Tensor two(out.shape);
    two.fill(0.74f);
    net.backward(two, cache, g_two);
    for (size_t b = 0; b < g_one.size(); ++b) {
        for (size_t j = 0; j < g_one[b].size(); ++j) {
            CHECK(g_two[b][j] == doctest::Approx(2.0f * g_one[b][j]).epsilon(1e-4));
        }
    }
}

TEST_CASE("backward before forward is a state error") {
    ConvNet net(tiny_config(HeadKind::Regression));
    ForwardCache cache;
    GradStore grads;
    Tensor g({1, 1});
    CHECK_THROWS_AS(net.backward(g, cache, grads), StateError);
}

TEST_CASE("forward rejects shape mismatches") {
    ConvNet net(tiny_config(HeadKind::Regression));
    ForwardCache cache;
    Tensor bad({1, 3, 4, 4});
    CHECK_THROWS_AS(net.forward(bad, cache), ValidationError);
}

TEST_CASE("forward is deterministic and batches stay order-aligned") {
    ConvNet a(tiny_config(HeadKind::Regression));
    ConvNet b(tiny_config(HeadKind::Regression));
    Rng rng(9);
    Tensor batch = random_batch(rng, 4, a.config());
    ForwardCache ca, cb;
    Tensor oa = a.forward(batch, ca);
    Tensor ob = b.forward(batch, cb);
    CHECK(oa.data == ob.data);  // same seed, bitwise identical nets

    // per-sample forward equals the batched row
    for (int n = 0; n < 4; ++n) {
        Tensor single({1, 3, 8, 8});
        std::copy(batch.data.begin() + n * 192, batch.data.begin() + (n + 1) * 192,
            single.data.begin());
        ForwardCache cs;
        Tensor os = a.forward(single, cs);
        CHECK(os.data[0] == oa.data[n]);
    }
}

TEST_CASE("regression output is inside (0,1) and finite for random nets") {
    Rng rng(77);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        NetConfig cfg = tiny_config(HeadKind::Regression);
        cfg.init_seed = seed;
        ConvNet net(cfg);
        ForwardCache cache;
        Tensor out = net.forward(random_batch(rng, 2, cfg), cache);
        for (float v : out.data) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
    }
}

TEST_CASE("checkpoint round trip is bitwise identical") {
    fs::path dir = fs::temp_directory_path() / "gv_nnet_test";
    fs::create_directories(dir);
    std::string path = (dir / "net.gvnet").string();

    ConvNet net(tiny_config(HeadKind::Regression));
    net.save(path);
    ConvNet back = ConvNet::load(path);
    CHECK(back.param_count() == net.param_count());
    for (size_t b = 0; b < net.param_blocks().size(); ++b) {
        CHECK(back.param_blocks()[b].values == net.param_blocks()[b].values);
    }

    Rng rng(2);
    Tensor batch = random_batch(rng, 2, net.config());
    ForwardCache c1, c2;
    Tensor o1 = net.forward(batch, c1);
    Tensor o2 = back.forward(batch, c2);
    CHECK(o1.data == o2.data);

    // saving the loaded net reproduces the file byte for byte
    std::string path2 = (dir / "net2.gvnet").string();
    back.save(path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));

    // corrupting the magic is a parse error
    auto bytes = read_file_bytes(path);
    bytes[0] = 'X';
    write_file_bytes(path2, bytes);
    CHECK_THROWS_AS(ConvNet::load(path2), ParseError);

    // truncated parameter data
    bytes = read_file_bytes(path);
    bytes.resize(bytes.size() - 10);
    write_file_bytes(path2, bytes);
    CHECK_THROWS_AS(ConvNet::load(path2), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("training: constant labels converge to that constant") {
    NetConfig cfg = tiny_config(HeadKind::Regression);
    ConvNet net(cfg);
    Rng rng(14);
    std::vector<TrainSample> data;
    for (int i = 0; i < 16; ++i) {
        TrainSample s;
        s.image = random_batch(rng, 1, cfg);
        s.gvi = 0.3f;
        data.push_back(std::move(s));
    }
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.epochs = 60;
    tc.batch_size = 8;
    tc.seed = 5;
    train(net, data, tc);
    for (const auto& s : data) {
        ForwardCache cache;
        Tensor out = net.forward(s.image, cache);
        CHECK(out.data[0] == doctest::Approx(0.3).epsilon(0.07));  // 0.3 +- 0.02
    }
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
    NetConfig cfg = tiny_config(HeadKind::Regression);
    ConvNet net(cfg);
    auto before = net.param_blocks();
    Rng rng(14);
    std::vector<TrainSample> data(4);
    for (auto& s : data) {
        s.image = random_batch(rng, 1, cfg);
        s.gvi = 0.9f;
    }
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    train(net, data, tc);
    for (size_t b = 0; b < before.size(); ++b) {
        CHECK(net.param_blocks()[b].values == before[b].values);
    }
}

TEST_CASE("training rejects an empty dataset and records the loss curve") {
    NetConfig cfg = tiny_config(HeadKind::Regression);
    ConvNet net(cfg);
    TrainConfig tc;
    CHECK_THROWS_AS(train(net, {}, tc), ValidationError);

    Rng rng(1);
    std::vector<TrainSample> data(6);
    for (auto& s : data) {
        s.image = random_batch(rng, 1, cfg);
        s.gvi = 0.4f;
    }
    tc.epochs = 4;
    TrainResult res = train(net, data, tc);
    CHECK(res.loss_curve.size() == 4);
    CHECK(res.epochs_run == 4);
}

TEST_CASE("fixed seed training is bit-reproducible") {
    NetConfig cfg = tiny_config(HeadKind::Regression);
    Rng rng(25);
    std::vector<TrainSample> data(10);
    for (auto& s : data) {
        s.image = random_batch(rng, 1, cfg);
        s.gvi = static_cast<float>(rng.uniform(0.1, 0.9));
    }
    TrainConfig tc;
    tc.epochs = 5;
    tc.seed = 123;

    ConvNet n1(cfg), n2(cfg);
    TrainResult r1 = train(n1, data, tc);
    TrainResult r2 = train(n2, data, tc);
    CHECK(r1.loss_curve == r2.loss_curve);
    for (size_t b = 0; b < n1.param_blocks().size(); ++b) {
        CHECK(n1.param_blocks()[b].values == n2.param_blocks()[b].values);
    }
}

TEST_CASE("per-epoch checkpoints are written when a directory is set") {
    fs::path dir = fs::temp_directory_path() / "gv_ckpt_epochs";
    fs::remove_all(dir);
    NetConfig cfg = tiny_config(HeadKind::Regression);
    ConvNet net(cfg);
    Rng rng(1);
    std::vector<TrainSample> data(4);
    for (auto& s : data) {
        s.image = random_batch(rng, 1, cfg);
        s.gvi = 0.5f;
    }
    TrainConfig tc;
    tc.epochs = 3;
    tc.checkpoint_dir = dir.string();
    train(net, data, tc);
    CHECK(fs::exists(dir / "epoch_0001.gvnet"));
    CHECK(fs::exists(dir / "epoch_0003.gvnet"));
    fs::remove_all(dir);
}

TEST_CASE("predict helpers enforce head kinds and mask threshold is strict") {
    ConvNet reg(tiny_config(HeadKind::Regression));
    ConvNet seg(tiny_config(HeadKind::Segmentation));
    RgbImage img(8, 8);
    for (auto& p : img.pixels) p = 80;
    CHECK_THROWS_AS(predict_mask(reg, img), ValidationError);
    CHECK_THROWS_AS(predict_gvi(seg, img), ValidationError);

    double gvi = predict_gvi(reg, img);
    CHECK(gvi > 0.0);
    CHECK(gvi < 1.0);

    // zero seg head: every pixel probability exactly 0.5 -> non-vegetation
    for (auto& b : seg.param_blocks()) std::fill(b.values.begin(), b.values.end(), 0.0f);
    BinaryMask m = predict_mask(seg, img);
    CHECK(m.vegetation_count() == 0);
}

TEST_CASE("losses: values and validation") {
    Tensor pred({2, 1}), target({2, 1}), dpred;
    pred.data = {0.4f, 0.8f};
    target.data = {0.5f, 0.5f};
    double mse = mse_loss(pred, target, dpred);
    CHECK(mse == doctest::Approx((0.01 + 0.09) / 2.0).epsilon(1e-6));
    CHECK(dpred.data[0] == doctest::Approx(2.0 * -0.1 / 2.0).epsilon(1e-5));

    double bce = bce_loss(pred, target, dpred);
    double expect = -0.5 * (0.5 * std::log(0.4) + 0.5 * std::log(0.6) + 0.5 * std::log(0.8) +
                            0.5 * std::log(0.2));
    CHECK(bce == doctest::Approx(expect).epsilon(1e-6));

    Tensor wrong({3, 1});
    CHECK_THROWS_AS(mse_loss(pred, wrong, dpred), ValidationError);
}
