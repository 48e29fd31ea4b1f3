#include "greenview/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace greenview {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ValidationError("tensor dimensions must be >= 1");
        n *= static_cast<size_t>(d);
    }
    data.assign(n, 0.0f);
}

void Tensor::check_finite(const std::string& where) const {
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite value in " + where);
        }
    }
}

Tensor image_to_tensor(const RgbImage& img) {
    // zero-centered channels keep early conv features from all saturating
    // the same way
    Tensor t({1, 3, img.height, img.width});
    const size_t plane = img.pixel_count();
    for (size_t i = 0; i < plane; ++i) {
        t.data[i] = img.pixels[i * 3] / 255.0f - 0.5f;
        t.data[plane + i] = img.pixels[i * 3 + 1] / 255.0f - 0.5f;
        t.data[2 * plane + i] = img.pixels[i * 3 + 2] / 255.0f - 0.5f;
    }
    return t;
}

Tensor mask_to_tensor(const BinaryMask& mask) {
    Tensor t({1, 1, mask.height, mask.width});
    for (size_t i = 0; i < mask.flags.size(); ++i) {
        t.data[i] = mask.flags[i] ? 1.0f : 0.0f;
    }
    return t;
}

void NetConfig::validate() const {
    if (input_h < 1 || input_w < 1 || input_ch < 1) {
        throw ValidationError("net input dimensions must be >= 1");
    }
    if (conv_channels.empty()) throw ValidationError("at least one conv block required");
    int h = input_h, w = input_w;
    for (int c : conv_channels) {
        if (c < 1) throw ValidationError("conv channel counts must be >= 1");
        if (h % 2 != 0 || w % 2 != 0) {
            throw ValidationError("input dimensions must halve cleanly at every pool stage");
        }
        h /= 2;
        w /= 2;
    }
}

namespace {

// ---- kernels -------------------------------------------------------------

void conv_forward(const Tensor& in, const std::vector<float>& W,
                  const std::vector<float>& bias, int k, Tensor& out) {
    const int N = in.shape[0], C = in.shape[1], H = in.shape[2], Wd = in.shape[3];
    const int OC = out.shape[1];
    const int pad = k / 2;
    const size_t plane = static_cast<size_t>(H) * Wd;

    // accumulate in double so long tap chains stay well below float noise
    std::vector<double> acc(plane);
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            std::fill(acc.begin(), acc.end(), static_cast<double>(bias[oc]));
            for (int ic = 0; ic < C; ++ic) {
                const float* ip = in.data.data() + (static_cast<size_t>(n) * C + ic) * plane;
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - pad;
                    const int y0 = std::max(0, -dy), y1 = std::min(H - 1, H - 1 - dy);
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - pad;
                        const int x0 = std::max(0, -dx), x1 = std::min(Wd - 1, Wd - 1 - dx);
                        const double wv =
                            W[((static_cast<size_t>(oc) * C + ic) * k + ky) * k + kx];
                        for (int y = y0; y <= y1; ++y) {
                            double* arow = acc.data() + static_cast<size_t>(y) * Wd;
                            const float* irow = ip + static_cast<size_t>(y + dy) * Wd + dx;
                            for (int x = x0; x <= x1; ++x) arow[x] += wv * irow[x];
                        }
                    }
                }
            }
            float* op = out.data.data() + (static_cast<size_t>(n) * OC + oc) * plane;
            for (size_t i = 0; i < plane; ++i) op[i] = static_cast<float>(acc[i]);
        }
    }
}

void conv_backward(const Tensor& in, const Tensor& dout, const std::vector<float>& W,
                   int k, Tensor& din, std::vector<float>& dW, std::vector<float>& db) {
    const int N = in.shape[0], C = in.shape[1], H = in.shape[2], Wd = in.shape[3];
    const int OC = dout.shape[1];
    const int pad = k / 2;
    const size_t plane = static_cast<size_t>(H) * Wd;

    din.fill(0.0f);
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            const float* gp = dout.data.data() + (static_cast<size_t>(n) * OC + oc) * plane;
            double bsum = 0.0;
            for (size_t i = 0; i < plane; ++i) bsum += gp[i];
            db[oc] += static_cast<float>(bsum);
            for (int ic = 0; ic < C; ++ic) {
                const float* ip = in.data.data() + (static_cast<size_t>(n) * C + ic) * plane;
                float* dp = din.data.data() + (static_cast<size_t>(n) * C + ic) * plane;
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - pad;
                    const int y0 = std::max(0, -dy), y1 = std::min(H - 1, H - 1 - dy);
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - pad;
                        const int x0 = std::max(0, -dx), x1 = std::min(Wd - 1, Wd - 1 - dx);
                        const size_t wi = ((static_cast<size_t>(oc) * C + ic) * k + ky) * k + kx;
                        const float wv = W[wi];
                        double wsum = 0.0;
                        for (int y = y0; y <= y1; ++y) {
                            const float* grow = gp + static_cast<size_t>(y) * Wd;
                            const float* irow = ip + static_cast<size_t>(y + dy) * Wd + dx;
                            float* drow = dp + static_cast<size_t>(y + dy) * Wd + dx;
                            for (int x = x0; x <= x1; ++x) {
                                wsum += static_cast<double>(grow[x]) * irow[x];
                                drow[x] += wv * grow[x];
                            }
                        }
                        dW[wi] += static_cast<float>(wsum);
                    }
                }
            }
        }
    }
}

void relu_forward(const Tensor& in, Tensor& out) {
    for (size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > 0.0f ? in.data[i] : 0.0f;
}

void relu_backward(const Tensor& in, const Tensor& dout, Tensor& din) {
    for (size_t i = 0; i < in.size(); ++i) {
        din.data[i] = in.data[i] > 0.0f ? dout.data[i] : 0.0f;
    }
}

void pool_forward(const Tensor& in, Tensor& out, std::vector<int32_t>& argmax) {
    const int N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int OH = H / 2, OW = W / 2;
    argmax.resize(out.size());
    size_t o = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
            for (int y = 0; y < OH; ++y) {
                for (int x = 0; x < OW; ++x) {
                    // ties keep the first index in row-major scan order
                    size_t i00 = base + static_cast<size_t>(2 * y) * W + 2 * x;
                    size_t best = i00;
                    float bv = in.data[i00];
                    const size_t cand[3] = {i00 + 1, i00 + W, i00 + W + 1};
                    for (size_t ci : cand) {
                        if (in.data[ci] > bv) {
                            bv = in.data[ci];
                            best = ci;
                        }
                    }
                    out.data[o] = bv;
                    argmax[o] = static_cast<int32_t>(best);
                    ++o;
                }
            }
        }
    }
}

void pool_backward(const Tensor& dout, const std::vector<int32_t>& argmax, Tensor& din) {
    din.fill(0.0f);
    for (size_t o = 0; o < dout.size(); ++o) {
        din.data[argmax[o]] += dout.data[o];
    }
}

void gap_forward(const Tensor& in, Tensor& out) {
    const int N = in.shape[0], C = in.shape[1];
    const size_t plane = static_cast<size_t>(in.shape[2]) * in.shape[3];
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* p = in.data.data() + (static_cast<size_t>(n) * C + c) * plane;
            double s = 0.0;
            for (size_t i = 0; i < plane; ++i) s += p[i];
            out.data[static_cast<size_t>(n) * C + c] =
                static_cast<float>(s / static_cast<double>(plane));
        }
    }
}

void gap_backward(const Tensor& dout, const Tensor& in_shape_ref, Tensor& din) {
    const int N = in_shape_ref.shape[0], C = in_shape_ref.shape[1];
    const size_t plane = static_cast<size_t>(in_shape_ref.shape[2]) * in_shape_ref.shape[3];
    const float inv = 1.0f / static_cast<float>(plane);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            float g = dout.data[static_cast<size_t>(n) * C + c] * inv;
            float* p = din.data.data() + (static_cast<size_t>(n) * C + c) * plane;
            std::fill(p, p + plane, g);
        }
    }
}

void dense_forward(const Tensor& in, const std::vector<float>& W,
                   const std::vector<float>& bias, int out_f, Tensor& out) {
    const int N = in.shape[0];
    const int F = in.shape[1];
    for (int n = 0; n < N; ++n) {
        const float* ip = in.data.data() + static_cast<size_t>(n) * F;
        for (int o = 0; o < out_f; ++o) {
            const float* wp = W.data() + static_cast<size_t>(o) * F;
            double s = bias[o];
            for (int f = 0; f < F; ++f) s += static_cast<double>(wp[f]) * ip[f];
            out.data[static_cast<size_t>(n) * out_f + o] = static_cast<float>(s);
        }
    }
}

void dense_backward(const Tensor& in, const Tensor& dout, const std::vector<float>& W,
                    int out_f, Tensor& din, std::vector<float>& dW, std::vector<float>& db) {
    const int N = in.shape[0];
    const int F = in.shape[1];
    din.fill(0.0f);
    for (int n = 0; n < N; ++n) {
        const float* ip = in.data.data() + static_cast<size_t>(n) * F;
        float* dp = din.data.data() + static_cast<size_t>(n) * F;
        for (int o = 0; o < out_f; ++o) {
            const float g = dout.data[static_cast<size_t>(n) * out_f + o];
            const float* wp = W.data() + static_cast<size_t>(o) * F;
            float* dwp = dW.data() + static_cast<size_t>(o) * F;
            db[o] += g;
            for (int f = 0; f < F; ++f) {
                dwp[f] += g * ip[f];
                dp[f] += g * wp[f];
            }
        }
    }
}

void sigmoid_forward(const Tensor& in, Tensor& out) {
    for (size_t i = 0; i < in.size(); ++i) {
        out.data[i] = 1.0f / (1.0f + std::exp(-in.data[i]));
    }
}

void sigmoid_backward(const Tensor& out, const Tensor& dout, Tensor& din) {
    for (size_t i = 0; i < out.size(); ++i) {
        din.data[i] = dout.data[i] * out.data[i] * (1.0f - out.data[i]);
    }
}

void upsample_forward(const Tensor& in, int f, Tensor& out) {
    const int N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H * f; ++y) {
                const float* irow =
                    in.data.data() + ((static_cast<size_t>(n) * C + c) * H + y / f) * W;
                float* orow = out.data.data() +
                              ((static_cast<size_t>(n) * C + c) * H * f + y) * (W * f);
                for (int x = 0; x < W * f; ++x) orow[x] = irow[x / f];
            }
        }
    }
}

void upsample_backward(const Tensor& dout, int f, Tensor& din) {
    const int N = din.shape[0], C = din.shape[1], H = din.shape[2], W = din.shape[3];
    din.fill(0.0f);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H * f; ++y) {
                float* drow = din.data.data() + ((static_cast<size_t>(n) * C + c) * H + y / f) * W;
                const float* grow = dout.data.data() +
                                    ((static_cast<size_t>(n) * C + c) * H * f + y) * (W * f);
                for (int x = 0; x < W * f; ++x) drow[x / f] += grow[x];
            }
        }
    }
}

std::vector<int> layer_output_shape(const LayerSpec& l, const std::vector<int>& in) {
    using K = LayerSpec::Kind;
    switch (l.kind) {
        case K::Conv:
            return {in[0], l.out_ch, in[2], in[3]};
        case K::Relu:
        case K::Sigmoid:
            return in;
        case K::Pool:
            return {in[0], in[1], in[2] / 2, in[3] / 2};
        case K::Gap:
            return {in[0], in[1]};
        case K::Dense:
            return {in[0], l.out_features};
        case K::Upsample:
            return {in[0], in[1], in[2] * l.factor, in[3] * l.factor};
    }
    throw StateError("unknown layer kind");
}

}  // namespace

// ---- ConvNet --------------------------------------------------------------

ConvNet::ConvNet(const NetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
}

void ConvNet::build() {
    layers_.clear();
    params_.clear();
    Rng rng(cfg_.init_seed);

    auto add_param = [&](const std::string& name, size_t n, double stddev) {
        ParamBlock b;
        b.name = name;
        b.values.resize(n);
        for (auto& v : b.values) {
            v = stddev > 0.0 ? static_cast<float>(rng.normal() * stddev) : 0.0f;
        }
        params_.push_back(std::move(b));
        return static_cast<int>(params_.size() - 1);
    };

    int ch = cfg_.input_ch;
    int block = 0;
    for (int oc : cfg_.conv_channels) {
        LayerSpec conv;
        conv.kind = LayerSpec::Kind::Conv;
        conv.in_ch = ch;
        conv.out_ch = oc;
        conv.ksize = 3;
        double std_he = std::sqrt(2.0 / (static_cast<double>(ch) * 9.0));
        conv.w_block = add_param("conv" + std::to_string(block) + ".w",
                                 static_cast<size_t>(oc) * ch * 9, std_he);
        conv.b_block = add_param("conv" + std::to_string(block) + ".b", oc, 0.0);
        layers_.push_back(conv);
        layers_.push_back(LayerSpec{.kind = LayerSpec::Kind::Relu});
        layers_.push_back(LayerSpec{.kind = LayerSpec::Kind::Pool});
        ch = oc;
        ++block;
    }

    if (cfg_.head == HeadKind::Regression) {
        layers_.push_back(LayerSpec{.kind = LayerSpec::Kind::Gap});
        LayerSpec dense;
        dense.kind = LayerSpec::Kind::Dense;
        dense.in_features = ch;
        dense.out_features = 1;
        dense.w_block = add_param("head.w", ch, std::sqrt(1.0 / ch));
        dense.b_block = add_param("head.b", 1, 0.0);
        layers_.push_back(dense);
        layers_.push_back(LayerSpec{.kind = LayerSpec::Kind::Sigmoid});
    } else {
        LayerSpec conv1;
        conv1.kind = LayerSpec::Kind::Conv;
        conv1.in_ch = ch;
        conv1.out_ch = 1;
        conv1.ksize = 1;
        conv1.w_block = add_param("head.w", ch, std::sqrt(1.0 / ch));
        conv1.b_block = add_param("head.b", 1, 0.0);
        layers_.push_back(conv1);
        layers_.push_back(LayerSpec{.kind = LayerSpec::Kind::Sigmoid});
        LayerSpec up;
        up.kind = LayerSpec::Kind::Upsample;
        up.factor = 1 << static_cast<int>(cfg_.conv_channels.size());
        layers_.push_back(up);
    }
}

size_t ConvNet::param_count() const {
    size_t n = 0;
    for (const auto& b : params_) n += b.values.size();
    return n;
}

std::vector<int> ConvNet::conv_layer_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].kind == LayerSpec::Kind::Conv) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::string ConvNet::layer_kind(int index) const {
    if (index < 0 || index >= static_cast<int>(layers_.size())) {
        throw ValidationError("layer index out of range");
    }
    using K = LayerSpec::Kind;
    switch (layers_[index].kind) {
        case K::Conv: return "conv";
        case K::Relu: return "relu";
        case K::Pool: return "pool";
        case K::Gap: return "gap";
        case K::Dense: return "dense";
        case K::Sigmoid: return "sigmoid";
        case K::Upsample: return "upsample";
    }
    return "?";
}

Tensor ConvNet::forward(const Tensor& batch, ForwardCache& cache) const {
    if (batch.shape.size() != 4 || batch.shape[1] != cfg_.input_ch ||
        batch.shape[2] != cfg_.input_h || batch.shape[3] != cfg_.input_w) {
        throw ValidationError("batch shape does not match net input configuration");
    }
    batch.check_finite("net input");

    cache.input = batch;
    cache.layers.assign(layers_.size(), LayerCache{});

    const Tensor* cur = &cache.input;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        LayerCache& c = cache.layers[i];
        c.output = Tensor(layer_output_shape(l, cur->shape));
        using K = LayerSpec::Kind;
        switch (l.kind) {
            case K::Conv:
                conv_forward(*cur, params_[l.w_block].values, params_[l.b_block].values,
                             l.ksize, c.output);
                break;
            case K::Relu:
                relu_forward(*cur, c.output);
                break;
            case K::Pool:
                pool_forward(*cur, c.output, c.aux);
                break;
            case K::Gap:
                gap_forward(*cur, c.output);
                break;
            case K::Dense:
                dense_forward(*cur, params_[l.w_block].values, params_[l.b_block].values,
                              l.out_features, c.output);
                break;
            case K::Sigmoid:
                sigmoid_forward(*cur, c.output);
                break;
            case K::Upsample:
                upsample_forward(*cur, l.factor, c.output);
                break;
        }
        c.output.check_finite("layer " + std::to_string(i) + " (" +
                              layer_kind(static_cast<int>(i)) + ") output");
        cur = &c.output;
    }
    cache.populated = true;
    return *cur;
}

void ConvNet::backward_impl(int start_layer, const Tensor& seed, ForwardCache& cache,
                            GradStore& grads) const {
    if (!cache.populated) throw StateError("backward called before forward");

    grads.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        grads[i].assign(params_[i].values.size(), 0.0f);
    }

    Tensor grad = seed;
    for (int i = start_layer; i >= 0; --i) {
        const LayerSpec& l = layers_[i];
        LayerCache& c = cache.layers[i];
        const Tensor& in = i == 0 ? cache.input : cache.layers[i - 1].output;
        if (!grad.same_shape(c.output)) {
            throw ValidationError("loss gradient shape does not match net output");
        }
        c.grad_output = grad;
        Tensor din(in.shape);
        using K = LayerSpec::Kind;
        switch (l.kind) {
            case K::Conv:
                conv_backward(in, grad, params_[l.w_block].values, l.ksize, din,
                              grads[l.w_block], grads[l.b_block]);
                break;
            case K::Relu:
                relu_backward(in, grad, din);
                break;
            case K::Pool:
                pool_backward(grad, c.aux, din);
                break;
            case K::Gap:
                gap_backward(grad, in, din);
                break;
            case K::Dense:
                dense_backward(in, grad, params_[l.w_block].values, l.out_features, din,
                               grads[l.w_block], grads[l.b_block]);
                break;
            case K::Sigmoid:
                sigmoid_backward(c.output, grad, din);
                break;
            case K::Upsample:
                upsample_backward(grad, l.factor, din);
                break;
        }
        din.check_finite("layer " + std::to_string(i) + " input gradient");
        grad = std::move(din);
    }
}

void ConvNet::backward(const Tensor& loss_grad, ForwardCache& cache, GradStore& grads) const {
    backward_impl(static_cast<int>(layers_.size()) - 1, loss_grad, cache, grads);
}

void ConvNet::backward_from_logit(ForwardCache& cache, GradStore& grads) const {
    if (cfg_.head != HeadKind::Regression) {
        throw ValidationError("logit backward requires the regression head");
    }
    // the stack ends [..., dense, sigmoid]; seed d(logit)/d(dense output) = 1
    int dense_idx = static_cast<int>(layers_.size()) - 2;
    Tensor seed(cache.layers[dense_idx].output.shape);
    seed.fill(1.0f);
    if (!cache.populated) throw StateError("backward called before forward");
    backward_impl(dense_idx, seed, cache, grads);
}

// ---- losses ----------------------------------------------------------------

double mse_loss(const Tensor& pred, const Tensor& target, Tensor& dpred) {
    if (!pred.same_shape(target)) throw ValidationError("loss shape mismatch");
    dpred = Tensor(pred.shape);
    const double inv = 1.0 / static_cast<double>(pred.size());
    double loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = static_cast<double>(pred.data[i]) - target.data[i];
        loss += d * d;
        dpred.data[i] = static_cast<float>(2.0 * d * inv);
    }
    return loss * inv;
}

double bce_loss(const Tensor& pred, const Tensor& target, Tensor& dpred) {
    if (!pred.same_shape(target)) throw ValidationError("loss shape mismatch");
    dpred = Tensor(pred.shape);
    constexpr double eps = 1e-7;
    const double inv = 1.0 / static_cast<double>(pred.size());
    double loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = std::clamp(static_cast<double>(pred.data[i]), eps, 1.0 - eps);
        double y = target.data[i];
        loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        dpred.data[i] = static_cast<float>((-y / p + (1.0 - y) / (1.0 - p)) * inv);
    }
    return loss * inv;
}

// ---- training ---------------------------------------------------------------

TrainResult train(ConvNet& net, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg) {
    if (dataset.empty()) throw ValidationError("empty training dataset");
    if (cfg.learning_rate < 0.0) throw ValidationError("learning rate must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");

    const NetConfig& nc = net.config();
    const bool seg = nc.head == HeadKind::Segmentation;
    for (const auto& s : dataset) {
        if (s.image.shape != std::vector<int>{1, nc.input_ch, nc.input_h, nc.input_w}) {
            throw ValidationError("training image does not match net input size");
        }
        if (seg && s.mask.size() == 0) {
            throw ValidationError("segmentation training requires mask labels");
        }
    }

    Rng rng(cfg.seed);
    std::vector<std::vector<float>> velocity(net.param_blocks().size());
    for (size_t i = 0; i < velocity.size(); ++i) {
        velocity[i].assign(net.param_blocks()[i].values.size(), 0.0f);
    }

    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    ForwardCache cache;
    GradStore grads;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;

        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t bsz = std::min(static_cast<size_t>(cfg.batch_size),
                                        order.size() - start);
            Tensor batch({static_cast<int>(bsz), nc.input_ch, nc.input_h, nc.input_w});
            Tensor labels = seg ? Tensor({static_cast<int>(bsz), 1, nc.input_h, nc.input_w})
                                : Tensor({static_cast<int>(bsz), 1});
            const size_t img_sz = dataset[0].image.size();
            for (size_t b = 0; b < bsz; ++b) {
                const TrainSample& s = dataset[order[start + b]];
                std::copy(s.image.data.begin(), s.image.data.end(),
                          batch.data.begin() + b * img_sz);
                if (seg) {
                    std::copy(s.mask.data.begin(), s.mask.data.end(),
                              labels.data.begin() + b * s.mask.size());
                } else {
                    labels.data[b] = s.gvi;
                }
            }

            Tensor pred = net.forward(batch, cache);
            Tensor dpred;
            double loss = seg ? bce_loss(pred, labels, dpred) : mse_loss(pred, labels, dpred);
            epoch_loss += loss * static_cast<double>(bsz);

            net.backward(dpred, cache, grads);

            const float lr = static_cast<float>(cfg.learning_rate);
            const float mu = static_cast<float>(cfg.momentum);
            auto& blocks = net.param_blocks();
            for (size_t p = 0; p < blocks.size(); ++p) {
                auto& w = blocks[p].values;
                auto& v = velocity[p];
                const auto& g = grads[p];
                for (size_t j = 0; j < w.size(); ++j) {
                    v[j] = mu * v[j] - lr * g[j];
                    w[j] += v[j];
                }
            }
        }

        epoch_loss /= static_cast<double>(dataset.size());
        result.loss_curve.push_back(epoch_loss);
        result.epochs_run = epoch + 1;

        if (!cfg.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d.gvnet", epoch + 1);
            net.save((std::filesystem::path(cfg.checkpoint_dir) / name).string());
        }
        if (cfg.on_epoch && !cfg.on_epoch(epoch + 1, epoch_loss)) break;
    }
    return result;
}

// ---- inference ----------------------------------------------------------------

double predict_gvi(const ConvNet& net, const RgbImage& image) {
    if (net.config().head != HeadKind::Regression) {
        throw ValidationError("predict_gvi requires a regression-head checkpoint");
    }
    RgbImage sized = resize_nearest(image, net.config().input_w, net.config().input_h);
    ForwardCache cache;
    Tensor out = net.forward(image_to_tensor(sized), cache);
    return out.data[0];
}

BinaryMask predict_mask(const ConvNet& net, const RgbImage& image) {
    if (net.config().head != HeadKind::Segmentation) {
        throw ValidationError("predict_mask requires a segmentation-head checkpoint");
    }
    RgbImage sized = resize_nearest(image, net.config().input_w, net.config().input_h);
    ForwardCache cache;
    Tensor out = net.forward(image_to_tensor(sized), cache);
    BinaryMask mask(net.config().input_w, net.config().input_h);
    for (size_t i = 0; i < mask.flags.size(); ++i) {
        mask.flags[i] = out.data[i] > 0.5f ? 1 : 0;
    }
    return resize_nearest(mask, image.width, image.height);
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'V', 'N', 'E', 'T', 'C', 'K', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError("truncated checkpoint");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void ConvNet::save(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path);

    nlohmann::json hdr{{"input_h", cfg_.input_h},
                       {"input_w", cfg_.input_w},
                       {"input_ch", cfg_.input_ch},
                       {"conv_channels", cfg_.conv_channels},
                       {"head", cfg_.head == HeadKind::Regression ? "regression" : "segmentation"},
                       {"init_seed", cfg_.init_seed}};
    std::string hs = hdr.dump();

    os.write(kMagic, 8);
    write_u32(os, 1);  // format version
    write_u32(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_u32(os, static_cast<uint32_t>(params_.size()));
    for (const auto& b : params_) {
        write_u32(os, static_cast<uint32_t>(b.name.size()));
        os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        write_u32(os, static_cast<uint32_t>(b.values.size()));
        // little-endian float32; raw write is exact on this target
        os.write(reinterpret_cast<const char*>(b.values.data()),
                 static_cast<std::streamsize>(b.values.size() * sizeof(float)));
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

ConvNet ConvNet::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);

    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw ParseError("not a net checkpoint: " + path);
    }
    uint32_t version = read_u32(is);
    if (version != 1) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t hlen = read_u32(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw ParseError("truncated checkpoint header");

    NetConfig cfg;
    try {
        nlohmann::json hdr = nlohmann::json::parse(hs);
        cfg.input_h = hdr.at("input_h").get<int>();
        cfg.input_w = hdr.at("input_w").get<int>();
        cfg.input_ch = hdr.at("input_ch").get<int>();
        cfg.conv_channels = hdr.at("conv_channels").get<std::vector<int>>();
        cfg.head = hdr.at("head").get<std::string>() == "regression" ? HeadKind::Regression
                                                                     : HeadKind::Segmentation;
        cfg.init_seed = hdr.at("init_seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad checkpoint header: ") + e.what());
    }

    ConvNet net(cfg);
    uint32_t nblocks = read_u32(is);
    if (nblocks != net.params_.size()) {
        throw ValidationError("checkpoint/config mismatch: parameter block count");
    }
    for (auto& b : net.params_) {
        uint32_t nlen = read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        uint32_t count = read_u32(is);
        if (!is || name != b.name || count != b.values.size()) {
            throw ValidationError("checkpoint/config mismatch at block " + b.name);
        }
        is.read(reinterpret_cast<char*>(b.values.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw ParseError("truncated checkpoint data");
    }
    return net;
}

}  // namespace greenview
