#pragma once

#include <string>
#include <vector>

#include "wmc/layers.hpp"
#include "wmc/random.hpp"
#include "wmc/tensor.hpp"

namespace wmc {

enum class Padding { same, valid };

/// Output extent and leading pad for one spatial axis.
struct AxisGeometry {
    Index out = 0;
    Index pad_before = 0;
};

AxisGeometry conv_geometry(Index in, Index kernel, Index stride, Padding padding);

/// Depthwise separable convolution: one kH x kW kernel per input channel,
/// followed by a 1x1 channel-mixing stage with bias.
///
/// Feature maps are [channels x height x width] tensors. The depthwise stage is
/// a cross-correlation; it never mixes channels.
class SepConvBlock {
public:
    SepConvBlock() = default;
    SepConvBlock(const std::string& name, Index in_channels, Index out_channels, Index kernel_h, Index kernel_w,
                 Index stride = 1, Padding padding = Padding::same);

    Index in_channels() const { return in_; }
    Index out_channels() const { return out_; }
    Index kernel_h() const { return kh_; }
    Index kernel_w() const { return kw_; }
    Index stride() const { return stride_; }
    Padding padding() const { return padding_; }

    void init(Rng& rng);

    Tensor depthwise_forward(const Tensor& input) const;
    Tensor pointwise_forward(const Tensor& maps) const;
    Tensor forward(const Tensor& input) const { return pointwise_forward(depthwise_forward(input)); }

    /// Backward of the pointwise stage; accumulates pointwise/bias grads, returns dL/dmaps.
    Tensor pointwise_backward(const Tensor& maps, const Tensor& dout);
    /// Backward of the depthwise stage; accumulates depthwise grads, returns dL/dinput.
    Tensor depthwise_backward(const Tensor& input, const Tensor& dout);

    ParameterList parameters() { return {&depthwise, &pointwise, &bias}; }
    Index parameter_count() const { return depthwise.size() + pointwise.size() + bias.size(); }

    Parameter depthwise;  // [K x kH x kW]
    Parameter pointwise;  // [K_out x K x 1 x 1]
    Parameter bias;       // [K_out]

private:
    void require_channels(const Tensor& t, Index expected, const char* stage) const;

    Index in_ = 0, out_ = 0, kh_ = 0, kw_ = 0, stride_ = 1;
    Padding padding_ = Padding::same;
};

/// 2x2 stride-2 max pooling; odd trailing rows/columns are dropped.
struct MaxPoolResult {
    Tensor output;
    std::vector<Index> argmax;  // flat input index per output element
};
MaxPoolResult max_pool2(const Tensor& maps);
Tensor max_pool2_backward(const Shape& input_shape, const std::vector<Index>& argmax, const Tensor& dout);

Vector global_average_pool(const Tensor& maps);
Tensor global_average_pool_backward(const Shape& input_shape, const Vector& dout);

struct FeatureExtractorConfig {
    Index input_channels = 3;
    Index image_size = 224;
    std::vector<Index> channels{16, 32, 64, 128};
    Index kernel_size = 3;
    bool global_average_pool = true;

    /// Length of the produced feature vector.
    Index feature_dim() const;
    void validate() const;
};

/// Stack of SepConvBlock -> relu -> maxpool2, then global average pooling
/// (or flattening when pooling is disabled).
class FeatureExtractor {
public:
    struct BlockTrace {
        Tensor input;
        Tensor depthwise_out;
        Tensor pre_activation;
        Tensor activation;
        MaxPoolResult pooled;
    };
    struct Trace {
        std::vector<BlockTrace> blocks;
        Vector features;
    };

    FeatureExtractor() = default;
    explicit FeatureExtractor(FeatureExtractorConfig config, const std::string& name = "extractor");

    const FeatureExtractorConfig& config() const { return config_; }
    Index feature_dim() const { return config_.feature_dim(); }

    void init(Rng& rng);

    Vector forward(const Tensor& image) const;
    Trace forward_trace(const Tensor& image) const;
    /// Accumulates every block's gradients; returns dL/dimage.
    Tensor backward(const Trace& trace, const Vector& dfeatures);

    ParameterList parameters();
    std::vector<SepConvBlock>& blocks() { return blocks_; }

private:
    FeatureExtractorConfig config_;
    std::vector<SepConvBlock> blocks_;
};

}  // namespace wmc
