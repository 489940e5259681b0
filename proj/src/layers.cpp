#include "wmc/layers.hpp"

#include <cmath>

#include "wmc/ops.hpp"

namespace wmc {

void initialize(Parameter& p, Index fan_in, Index fan_out, Init init, Rng& rng) {
    double limit = 0.0;
    switch (init) {
        case Init::zeros: p.value.data().setZero(); return;
        case Init::xavier_uniform: limit = std::sqrt(6.0 / double(fan_in + fan_out)); break;
        case Init::he_uniform: limit = std::sqrt(6.0 / double(fan_in)); break;
    }
    for (Index k = 0; k < p.size(); ++k) p.value[k] = rng.uniform(-limit, limit);
}

Dense::Dense(const std::string& name, Index in, Index out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

void Dense::init(Rng& rng, Init init) {
    initialize(weight, in_, out_, init, rng);
    bias.value.data().setZero();
}

Vector Dense::forward(const Vector& x) const {
    if (x.size() != in_)
        throw DimensionError(weight.name + ": expected input of length " + std::to_string(in_) + ", got " +
                             std::to_string(x.size()));
    return weight.matrix(out_, in_) * x + bias.value.data();
}

Vector Dense::backward(const Vector& x, const Vector& dy) {
    weight.grad_matrix(out_, in_).noalias() += dy * x.transpose();
    bias.grad.data() += dy;
    return weight.matrix(out_, in_).transpose() * dy;
}

Vector dropout_mask(Index n, double p, Rng& rng) {
    Vector mask(n);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Index k = 0; k < n; ++k) mask[k] = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

double softmax_cross_entropy(const Vector& logits, Index label, Vector& dlogits) {
    const Vector p = softmax(logits);
    dlogits = p;
    dlogits[label] -= 1.0;
    // log-sum-exp form keeps the loss finite when p[label] underflows.
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return lse - logits[label];
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, ParameterList params)
    : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    for (const Parameter* p : params_) {
        m_.push_back(Vector::Zero(p->size()));
        v_.push_back(Vector::Zero(p->size()));
    }
}

void Optimizer::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Optimizer::step(double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, double(t_));
    const double c2 = 1.0 - std::pow(kBeta2, double(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        const Vector g = p.grad.data() * grad_scale;
        if (kind_ == OptimizerKind::sgd) {
            p.value.data() -= lr_ * g;
            continue;
        }
        m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * g;
        v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * g.cwiseProduct(g);
        p.value.data().array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + kEps);
    }
}

}  // namespace wmc
