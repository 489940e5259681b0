#include "wmc/sepconv.hpp"

#include <algorithm>

namespace wmc {

AxisGeometry conv_geometry(Index in, Index kernel, Index stride, Padding padding) {
    if (stride < 1 || kernel < 1) throw DimensionError("convolution stride and kernel must be positive");
    AxisGeometry g;
    if (padding == Padding::valid) {
        if (in < kernel)
            throw DimensionError("valid convolution: input extent " + std::to_string(in) +
                                 " smaller than kernel " + std::to_string(kernel));
        g.out = (in - kernel) / stride + 1;
        g.pad_before = 0;
    } else {
        g.out = (in + stride - 1) / stride;
        const Index total = std::max<Index>((g.out - 1) * stride + kernel - in, 0);
        g.pad_before = total / 2;
    }
    return g;
}

SepConvBlock::SepConvBlock(const std::string& name, Index in_channels, Index out_channels, Index kernel_h,
                           Index kernel_w, Index stride, Padding padding)
    : depthwise(name + ".depthwise", {in_channels, kernel_h, kernel_w}),
      pointwise(name + ".pointwise", {out_channels, in_channels, 1, 1}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      kh_(kernel_h),
      kw_(kernel_w),
      stride_(stride),
      padding_(padding) {
    if (stride < 1) throw ConfigError(name + ": stride must be positive");
}

void SepConvBlock::init(Rng& rng) {
    initialize(depthwise, kh_ * kw_, kh_ * kw_, Init::he_uniform, rng);
    initialize(pointwise, in_, out_, Init::he_uniform, rng);
    bias.value.data().setZero();
}

void SepConvBlock::require_channels(const Tensor& t, Index expected, const char* stage) const {
    if (t.rank() != 3 || t.dim(0) != expected)
        throw DimensionError(depthwise.name + " " + stage + ": expected " + std::to_string(expected) +
                             " input channels, got shape " + shape_string(t.shape()));
}

Tensor SepConvBlock::depthwise_forward(const Tensor& input) const {
    require_channels(input, in_, "depthwise");
    const Index H = input.dim(1), W = input.dim(2);
    const AxisGeometry gy = conv_geometry(H, kh_, stride_, padding_);
    const AxisGeometry gx = conv_geometry(W, kw_, stride_, padding_);
    Tensor out({in_, gy.out, gx.out});
    const double* in = input.data().data();
    const double* ker = depthwise.value.data().data();
    double* dst = out.data().data();
    for (Index k = 0; k < in_; ++k) {
        const double* plane = in + k * H * W;
        const double* kk = ker + k * kh_ * kw_;
        for (Index y = 0; y < gy.out; ++y) {
            for (Index x = 0; x < gx.out; ++x) {
                double acc = 0.0;
                for (Index u = 0; u < kh_; ++u) {
                    const Index iy = y * stride_ + u - gy.pad_before;
                    if (iy < 0 || iy >= H) continue;
                    for (Index v = 0; v < kw_; ++v) {
                        const Index ix = x * stride_ + v - gx.pad_before;
                        if (ix < 0 || ix >= W) continue;
                        acc += plane[iy * W + ix] * kk[u * kw_ + v];
                    }
                }
                dst[(k * gy.out + y) * gx.out + x] = acc;
            }
        }
    }
    return out;
}

Tensor SepConvBlock::depthwise_backward(const Tensor& input, const Tensor& dout) {
    require_channels(input, in_, "depthwise backward");
    const Index H = input.dim(1), W = input.dim(2);
    const AxisGeometry gy = conv_geometry(H, kh_, stride_, padding_);
    const AxisGeometry gx = conv_geometry(W, kw_, stride_, padding_);
    if (dout.shape() != Shape{in_, gy.out, gx.out})
        throw DimensionError(depthwise.name + ": upstream gradient shape " + shape_string(dout.shape()));
    Tensor din(input.shape());
    const double* in = input.data().data();
    const double* ker = depthwise.value.data().data();
    double* dker = depthwise.grad.data().data();
    const double* g = dout.data().data();
    double* di = din.data().data();
    for (Index k = 0; k < in_; ++k) {
        for (Index y = 0; y < gy.out; ++y) {
            for (Index x = 0; x < gx.out; ++x) {
                const double go = g[(k * gy.out + y) * gx.out + x];
                if (go == 0.0) continue;
                for (Index u = 0; u < kh_; ++u) {
                    const Index iy = y * stride_ + u - gy.pad_before;
                    if (iy < 0 || iy >= H) continue;
                    for (Index v = 0; v < kw_; ++v) {
                        const Index ix = x * stride_ + v - gx.pad_before;
                        if (ix < 0 || ix >= W) continue;
                        const Index at = (k * H + iy) * W + ix;
                        dker[(k * kh_ + u) * kw_ + v] += go * in[at];
                        di[at] += go * ker[(k * kh_ + u) * kw_ + v];
                    }
                }
            }
        }
    }
    return din;
}

Tensor SepConvBlock::pointwise_forward(const Tensor& maps) const {
    require_channels(maps, in_, "pointwise");
    const Index sites = maps.dim(1) * maps.dim(2);
    Tensor out({out_, maps.dim(1), maps.dim(2)});
    auto y = out.matrix(out_, sites);
    y.noalias() = pointwise.matrix(out_, in_) * maps.matrix(in_, sites);
    y.colwise() += bias.value.data();
    return out;
}

Tensor SepConvBlock::pointwise_backward(const Tensor& maps, const Tensor& dout) {
    require_channels(maps, in_, "pointwise backward");
    const Index sites = maps.dim(1) * maps.dim(2);
    if (dout.shape() != Shape{out_, maps.dim(1), maps.dim(2)})
        throw DimensionError(pointwise.name + ": upstream gradient shape " + shape_string(dout.shape()));
    const auto g = dout.matrix(out_, sites);
    pointwise.grad_matrix(out_, in_).noalias() += g * maps.matrix(in_, sites).transpose();
    bias.grad.data() += g.rowwise().sum();
    Tensor dmaps(maps.shape());
    dmaps.matrix(in_, sites).noalias() = pointwise.matrix(out_, in_).transpose() * g;
    return dmaps;
}

MaxPoolResult max_pool2(const Tensor& maps) {
    if (maps.rank() != 3 || maps.dim(1) < 2 || maps.dim(2) < 2)
        throw DimensionError("max_pool2 needs [C x H x W] maps with H, W >= 2, got " + shape_string(maps.shape()));
    const Index C = maps.dim(0), H = maps.dim(1), W = maps.dim(2);
    const Index OH = H / 2, OW = W / 2;
    MaxPoolResult r{Tensor({C, OH, OW}), std::vector<Index>(std::size_t(C * OH * OW))};
    const double* in = maps.data().data();
    for (Index c = 0; c < C; ++c)
        for (Index y = 0; y < OH; ++y)
            for (Index x = 0; x < OW; ++x) {
                Index best = (c * H + 2 * y) * W + 2 * x;
                for (Index dy = 0; dy < 2; ++dy)
                    for (Index dx = 0; dx < 2; ++dx) {
                        const Index at = (c * H + 2 * y + dy) * W + 2 * x + dx;
                        if (in[at] > in[best]) best = at;
                    }
                const Index o = (c * OH + y) * OW + x;
                r.output[o] = in[best];
                r.argmax[std::size_t(o)] = best;
            }
    return r;
}

Tensor max_pool2_backward(const Shape& input_shape, const std::vector<Index>& argmax, const Tensor& dout) {
    if (Index(argmax.size()) != dout.size()) throw DimensionError("max_pool2_backward: argmax/gradient size mismatch");
    Tensor din(input_shape);
    for (Index o = 0; o < dout.size(); ++o) din[argmax[std::size_t(o)]] += dout[o];
    return din;
}

Vector global_average_pool(const Tensor& maps) {
    if (maps.rank() != 3) throw DimensionError("global_average_pool expects [C x H x W], got " + shape_string(maps.shape()));
    const Index sites = maps.dim(1) * maps.dim(2);
    return maps.matrix(maps.dim(0), sites).rowwise().mean();
}

Tensor global_average_pool_backward(const Shape& input_shape, const Vector& dout) {
    Tensor din(input_shape);
    const Index sites = input_shape[1] * input_shape[2];
    din.matrix(input_shape[0], sites).colwise() = dout / double(sites);
    return din;
}

Index FeatureExtractorConfig::feature_dim() const {
    validate();
    if (global_average_pool) return channels.back();
    Index side = image_size;
    for (std::size_t b = 0; b < channels.size(); ++b) side /= 2;
    return channels.back() * side * side;
}

void FeatureExtractorConfig::validate() const {
    if (channels.empty()) throw ConfigError("feature extractor needs at least one block");
    for (Index c : channels)
        if (c <= 0) throw ConfigError("feature extractor channel counts must be positive");
    if (input_channels <= 0 || kernel_size <= 0) throw ConfigError("feature extractor sizes must be positive");
    Index side = image_size;
    for (std::size_t b = 0; b < channels.size(); ++b) {
        if (side < 2)
            throw ConfigError("image size " + std::to_string(image_size) + " too small for " +
                              std::to_string(channels.size()) + " pooling stages");
        side /= 2;
    }
}

FeatureExtractor::FeatureExtractor(FeatureExtractorConfig config, const std::string& name) : config_(std::move(config)) {
    config_.validate();
    Index in = config_.input_channels;
    for (std::size_t b = 0; b < config_.channels.size(); ++b) {
        blocks_.emplace_back(name + ".block" + std::to_string(b), in, config_.channels[b], config_.kernel_size,
                             config_.kernel_size);
        in = config_.channels[b];
    }
}

void FeatureExtractor::init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
}

ParameterList FeatureExtractor::parameters() {
    ParameterList out;
    for (auto& b : blocks_)
        for (Parameter* p : b.parameters()) out.push_back(p);
    return out;
}

FeatureExtractor::Trace FeatureExtractor::forward_trace(const Tensor& image) const {
    const Shape expected{config_.input_channels, config_.image_size, config_.image_size};
    if (image.shape() != expected)
        throw DimensionError("feature extractor expects image shape " + shape_string(expected) + ", got " +
                             shape_string(image.shape()));
    Trace t;
    Tensor x = image;
    for (const auto& block : blocks_) {
        BlockTrace bt;
        bt.input = x;
        bt.depthwise_out = block.depthwise_forward(x);
        bt.pre_activation = block.pointwise_forward(bt.depthwise_out);
        bt.activation = Tensor(bt.pre_activation.shape(), bt.pre_activation.data().cwiseMax(0.0));
        bt.pooled = max_pool2(bt.activation);
        x = bt.pooled.output;
        t.blocks.push_back(std::move(bt));
    }
    t.features = config_.global_average_pool ? global_average_pool(x) : Vector(x.data());
    return t;
}

Vector FeatureExtractor::forward(const Tensor& image) const { return forward_trace(image).features; }

Tensor FeatureExtractor::backward(const Trace& trace, const Vector& dfeatures) {
    const Shape& last = trace.blocks.back().pooled.output.shape();
    Tensor g = config_.global_average_pool ? global_average_pool_backward(last, dfeatures) : Tensor(last, dfeatures);
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const BlockTrace& bt = trace.blocks[b];
        Tensor dact = max_pool2_backward(bt.activation.shape(), bt.pooled.argmax, g);
        dact.data() = (bt.pre_activation.data().array() > 0.0).select(dact.data(), 0.0);
        Tensor dmaps = blocks_[b].pointwise_backward(bt.depthwise_out, dact);
        g = blocks_[b].depthwise_backward(bt.input, dmaps);
    }
    return g;
}

}  // namespace wmc
