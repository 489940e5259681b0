#include "wmc/capsule.hpp"

#include "wmc/layers.hpp"

namespace wmc {

void CapsuleConfig::validate() const {
    if (input_capsules <= 0 || input_dim <= 0 || output_capsules <= 0 || output_dim <= 0)
        throw ConfigError("capsule counts and dimensions must be positive");
    if (routing_iterations < 1) throw ConfigError("routing needs at least one iteration");
}

RoutingResult dynamic_routing(const Matrix& predictions, Index input_capsules, Index output_capsules,
                              int iterations) {
    if (iterations < 1) throw DomainError("dynamic routing needs at least one iteration");
    if (predictions.rows() != input_capsules * output_capsules)
        throw DimensionError("dynamic routing: expected " + std::to_string(input_capsules * output_capsules) +
                             " prediction rows, got " + std::to_string(predictions.rows()));
    Matrix logits = Matrix::Zero(input_capsules, output_capsules);
    RoutingResult r;
    for (int it = 0; it < iterations; ++it) {
        r.couplings = softmax_rows(logits);
        r.coupling_history.push_back(r.couplings);
        r.outputs = route_with_couplings(predictions, r.couplings, &r.pre_squash);
        if (it + 1 == iterations) break;
        for (Index i = 0; i < input_capsules; ++i)
            for (Index j = 0; j < output_capsules; ++j)
                logits(i, j) += predictions.row(i * output_capsules + j).dot(r.outputs.row(j));
    }
    return r;
}

Matrix route_with_couplings(const Matrix& predictions, const Matrix& couplings, Matrix* pre_squash) {
    const Index n_in = couplings.rows(), n_out = couplings.cols();
    if (predictions.rows() != n_in * n_out)
        throw DimensionError("route_with_couplings: couplings " + std::to_string(n_in) + "x" + std::to_string(n_out) +
                             " do not match " + std::to_string(predictions.rows()) + " prediction rows");
    Matrix z = Matrix::Zero(n_out, predictions.cols());
    for (Index i = 0; i < n_in; ++i)
        for (Index j = 0; j < n_out; ++j) z.row(j) += couplings(i, j) * predictions.row(i * n_out + j);
    Matrix v(n_out, predictions.cols());
    for (Index j = 0; j < n_out; ++j) v.row(j) = squash(z.row(j)).transpose();
    if (pre_squash) *pre_squash = std::move(z);
    return v;
}

CapsuleLayer::CapsuleLayer(CapsuleConfig config, const std::string& name)
    : weights(name + ".weights",
              {config.input_capsules, config.output_capsules, config.output_dim, config.input_dim}),
      config_(config) {
    config_.validate();
}

void CapsuleLayer::init(Rng& rng) {
    initialize(weights, config_.input_dim, config_.output_dim, Init::xavier_uniform, rng);
}

void CapsuleLayer::require_inputs(const Matrix& inputs) const {
    if (inputs.rows() != config_.input_capsules || inputs.cols() != config_.input_dim)
        throw DimensionError(weights.name + ": expected inputs " + std::to_string(config_.input_capsules) + "x" +
                             std::to_string(config_.input_dim) + ", got " + std::to_string(inputs.rows()) + "x" +
                             std::to_string(inputs.cols()));
}

Matrix CapsuleLayer::prediction_vectors(const Matrix& inputs) const {
    require_inputs(inputs);
    const Index n_in = config_.input_capsules, n_out = config_.output_capsules;
    const Index d_in = config_.input_dim, d_out = config_.output_dim;
    Matrix u(n_in * n_out, d_out);
    const double* w = weights.value.data().data();
    for (Index i = 0; i < n_in; ++i)
        for (Index j = 0; j < n_out; ++j) {
            ConstMatrixMap wij(w + (i * n_out + j) * d_out * d_in, d_out, d_in);
            u.row(i * n_out + j).noalias() = (wij * inputs.row(i).transpose()).transpose();
        }
    return u;
}

CapsuleLayer::Trace CapsuleLayer::forward_trace(const Matrix& inputs) const {
    Trace t;
    t.inputs = inputs;
    t.predictions = prediction_vectors(inputs);
    t.routing = dynamic_routing(t.predictions, config_.input_capsules, config_.output_capsules,
                                config_.routing_iterations);
    return t;
}

Matrix CapsuleLayer::forward_fixed_couplings(const Matrix& inputs, const Matrix& couplings) const {
    return route_with_couplings(prediction_vectors(inputs), couplings);
}

Matrix CapsuleLayer::backward(const Trace& trace, const Matrix& doutputs) {
    const Index n_in = config_.input_capsules, n_out = config_.output_capsules;
    const Index d_in = config_.input_dim, d_out = config_.output_dim;
    const Matrix& c = trace.routing.couplings;
    Matrix dz(n_out, d_out);
    for (Index j = 0; j < n_out; ++j)
        dz.row(j) = squash_backward(trace.routing.pre_squash.row(j), doutputs.row(j)).transpose();

    Matrix dinputs = Matrix::Zero(n_in, d_in);
    const double* w = weights.value.data().data();
    double* gw = weights.grad.data().data();
    for (Index i = 0; i < n_in; ++i)
        for (Index j = 0; j < n_out; ++j) {
            const Vector du = c(i, j) * dz.row(j).transpose();
            ConstMatrixMap wij(w + (i * n_out + j) * d_out * d_in, d_out, d_in);
            MatrixMap gij(gw + (i * n_out + j) * d_out * d_in, d_out, d_in);
            gij.noalias() += du * trace.inputs.row(i);
            dinputs.row(i).noalias() += (wij.transpose() * du).transpose();
        }
    return dinputs;
}

}  // namespace wmc
