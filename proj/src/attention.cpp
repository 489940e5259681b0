#include "wmc/attention.hpp"

namespace wmc {

SelfAttentionResult self_attention(const Matrix& q) {
    if (q.rows() < 1 || q.cols() < 1) throw DimensionError("self_attention needs a non-empty query matrix");
    SelfAttentionResult r;
    r.weights.resize(q.rows(), q.rows());
    for (Index n = 0; n < q.rows(); ++n) r.weights.row(n) = softmatch(q.row(n), q).transpose();
    r.output = r.weights * q;
    return r;
}

Matrix self_attention_backward(const Matrix& q, const SelfAttentionResult& fwd, const Matrix& doutput) {
    const double scale = 1.0 / std::sqrt(double(q.cols()));
    const Matrix& p = fwd.weights;
    Matrix dq = p.transpose() * doutput;
    const Matrix dp = doutput * q.transpose();
    Matrix ds(p.rows(), p.cols());
    for (Index n = 0; n < p.rows(); ++n) ds.row(n) = softmax_backward(p.row(n), dp.row(n)).transpose();
    // Scores are q_n . q_i, so Q receives the gradient from both sides.
    dq.noalias() += scale * (ds + ds.transpose()) * q;
    return dq;
}

void AttentionConfig::validate() const {
    if (capsules < 1 || capsule_dim < 1) throw ConfigError("attention input shape must be positive");
    if (image_dim < 1) throw ConfigError("Image_vector dimension must be at least 1");
}

ImageVectorLayer::ImageVectorLayer(AttentionConfig config, const std::string& name)
    : projection(name + ".projection", config.capsules * config.capsule_dim, config.image_dim), config_(config) {
    config_.validate();
}

std::pair<ImageVectorLayer::Trace, Vector> ImageVectorLayer::forward_trace(const Matrix& capsules) const {
    if (capsules.rows() != config_.capsules || capsules.cols() != config_.capsule_dim)
        throw DimensionError(projection.weight.name + ": expected capsule outputs " + std::to_string(config_.capsules) +
                             "x" + std::to_string(config_.capsule_dim) + ", got " + std::to_string(capsules.rows()) +
                             "x" + std::to_string(capsules.cols()));
    Trace t;
    t.capsules = capsules;
    t.attention = self_attention(capsules);
    t.flat = Eigen::Map<const Vector>(t.attention.output.data(), t.attention.output.size());
    Vector out = projection.forward(t.flat);
    return {std::move(t), std::move(out)};
}

Matrix ImageVectorLayer::backward(const Trace& trace, const Vector& dimage) {
    const Vector dflat = projection.backward(trace.flat, dimage);
    const Matrix dout = Eigen::Map<const Matrix>(dflat.data(), config_.capsules, config_.capsule_dim);
    return self_attention_backward(trace.capsules, trace.attention, dout);
}

}  // namespace wmc
