#pragma once

#include <cmath>
#include <string>

#include "wmc/layers.hpp"
#include "wmc/ops.hpp"
#include "wmc/tensor.hpp"

namespace wmc {

/// Scaled dot-product score a(q, k) = q.k / sqrt(d).
template <typename DerivedQ, typename DerivedK>
typename DerivedQ::Scalar attention_score(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k) {
    return q.reshaped().dot(k.reshaped()) / std::sqrt(typename DerivedQ::Scalar(q.size()));
}

/// Probability distribution over the rows of `keys` for query `q`.
template <typename DerivedQ, typename DerivedK>
Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, 1> softmatch(const Eigen::MatrixBase<DerivedQ>& q,
                                                                    const Eigen::MatrixBase<DerivedK>& keys) {
    if (keys.rows() == 0) throw DomainError("softmatch needs at least one key");
    if (keys.cols() != q.size())
        throw DimensionError("softmatch: query length " + std::to_string(q.size()) + " vs key length " +
                             std::to_string(keys.cols()));
    Eigen::Matrix<typename DerivedQ::Scalar, Eigen::Dynamic, 1> scores(keys.rows());
    for (Index i = 0; i < keys.rows(); ++i) scores[i] = attention_score(q, keys.row(i));
    return softmax(scores);
}

/// Self-attention with keys = values = queries = rows of `q`.
struct SelfAttentionResult {
    Matrix output;   // [N x d]
    Matrix weights;  // [N x N], row n = softmatch(q_n, Q)
};

SelfAttentionResult self_attention(const Matrix& q);

/// dL/dQ given the forward result and dL/doutput.
Matrix self_attention_backward(const Matrix& q, const SelfAttentionResult& fwd, const Matrix& doutput);

struct AttentionConfig {
    Index capsules = 16;
    Index capsule_dim = 16;
    Index image_dim = 128;

    void validate() const;
};

/// Self-attention over capsule rows, flattened, then a dense projection.
class ImageVectorLayer {
public:
    struct Trace {
        Matrix capsules;
        SelfAttentionResult attention;
        Vector flat;
    };

    ImageVectorLayer() = default;
    ImageVectorLayer(AttentionConfig config, const std::string& name = "image_vector");

    const AttentionConfig& config() const { return config_; }
    void init(Rng& rng) { projection.init(rng); }

    Vector forward(const Matrix& capsules) const { return forward_trace(capsules).second; }
    std::pair<Trace, Vector> forward_trace(const Matrix& capsules) const;
    Matrix backward(const Trace& trace, const Vector& dimage);

    ParameterList parameters() { return projection.parameters(); }

    Dense projection;

private:
    AttentionConfig config_;
};

}  // namespace wmc
