#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "greenview/raster.hpp"

namespace greenview {

// Dense single-precision array with an NCHW (or flat) shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    size_t size() const { return data.size(); }
    int dim(size_t i) const { return shape[i]; }

    // NCHW accessor
    float& at(int n, int c, int y, int x) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    float at(int n, int c, int y, int x) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // throws NumericError when any element is not finite
    void check_finite(const std::string& where) const;
};

// Converts an 8-bit image to a (1,3,H,W) tensor in [0,1].
Tensor image_to_tensor(const RgbImage& img);
Tensor mask_to_tensor(const BinaryMask& mask);  // (1,1,H,W) of 0/1

// Per-layer activations captured during a forward pass. Owned by the
// caller, so a loaded net is read-only and safe to share across threads
// (one cache per thread).
struct LayerCache {
    Tensor output;
    std::vector<int32_t> aux;  // pool argmax indices
    Tensor grad_output;        // filled during backward
};

struct ForwardCache {
    Tensor input;
    std::vector<LayerCache> layers;
    bool populated = false;
};

// One learnable array (conv weights, biases, dense weights, ...).
struct ParamBlock {
    std::string name;
    std::vector<float> values;
};

// Gradients parallel to ConvNet::param_blocks().
using GradStore = std::vector<std::vector<float>>;

enum class HeadKind { Regression, Segmentation };

struct NetConfig {
    int input_h = 128;
    int input_w = 128;
    int input_ch = 3;
    std::vector<int> conv_channels = {8, 16};  // one conv->relu->pool block each
    HeadKind head = HeadKind::Regression;
    uint64_t init_seed = 1;

    void validate() const;
};

struct LayerSpec {
    enum class Kind { Conv, Relu, Pool, Gap, Dense, Sigmoid, Upsample };
    Kind kind;
    int in_ch = 0, out_ch = 0, ksize = 0;       // conv
    int in_features = 0, out_features = 0;      // dense
    int factor = 1;                             // upsample
    int w_block = -1, b_block = -1;             // indices into param_blocks()
};

// Desk-scale convolutional estimator: repeated [conv3x3 -> ReLU -> maxpool2x2]
// blocks and either a scalar head (GAP -> dense -> sigmoid) or a per-pixel
// head (1x1 conv -> sigmoid -> nearest upsample). Parameters are owned here;
// activations live in caller-owned caches, so forward is const.
class ConvNet {
public:
    explicit ConvNet(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }
    size_t param_count() const;

    std::vector<ParamBlock>& param_blocks() { return params_; }
    const std::vector<ParamBlock>& param_blocks() const { return params_; }

    // batch must be (N, input_ch, input_h, input_w). Regression output is
    // (N,1) in (0,1); segmentation output is (N,1,input_h,input_w).
    Tensor forward(const Tensor& batch, ForwardCache& cache) const;

    // Chains loss_grad (d loss / d output) back through the stack; fills
    // `grads` (resized to match param_blocks) and each LayerCache's
    // grad_output. Throws StateError when the cache was not populated by a
    // forward pass.
    void backward(const Tensor& loss_grad, ForwardCache& cache, GradStore& grads) const;

    // Same, but seeds the gradient at the pre-sigmoid logit (regression head
    // only); used by Grad-CAM so the map is invariant to positive rescaling.
    void backward_from_logit(ForwardCache& cache, GradStore& grads) const;

    // Indices into the layer stack that are convolutional; the last trunk
    // conv is the Grad-CAM default.
    std::vector<int> conv_layer_indices() const;
    int layer_count() const { return static_cast<int>(layers_.size()); }
    std::string layer_kind(int index) const;

    void save(const std::string& path) const;
    static ConvNet load(const std::string& path);

private:
    void build();
    void backward_impl(int start_layer, const Tensor& seed, ForwardCache& cache,
                       GradStore& grads) const;

    NetConfig cfg_;
    std::vector<LayerSpec> layers_;
    std::vector<ParamBlock> params_;
};

// Losses: mean over every output element. Both return the scalar loss and
// fill dpred with d loss / d pred.
double mse_loss(const Tensor& pred, const Tensor& target, Tensor& dpred);
double bce_loss(const Tensor& pred, const Tensor& target, Tensor& dpred);

struct TrainSample {
    Tensor image;  // (1,3,H,W)
    float gvi = 0.0f;
    Tensor mask;   // (1,1,H,W); empty for regression datasets
    std::string id;
};

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 16;
    int epochs = 10;
    uint64_t seed = 1;
    std::string checkpoint_dir;  // per-epoch checkpoints written when non-empty

    // Called after each epoch with (epoch, mean train loss); return false to
    // stop early (used for convergence-based stopping).
    std::function<bool(int, double)> on_epoch;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean train loss per completed epoch
    int epochs_run = 0;
};

// SGD with momentum over shuffled mini-batches. Single-threaded and
// bit-deterministic for a fixed seed. Loss follows the head: MSE for
// regression, per-pixel BCE for segmentation.
TrainResult train(ConvNet& net, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg);

// Inference helpers; the image is resampled to the net input size.
double predict_gvi(const ConvNet& net, const RgbImage& image);
// Thresholds per-pixel probability at strictly > 0.5 and resamples the mask
// back to the source image dimensions.
BinaryMask predict_mask(const ConvNet& net, const RgbImage& image);

}  // namespace greenview
