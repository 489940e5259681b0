#pragma once

#include <string>
#include <vector>

#include "wmc/random.hpp"
#include "wmc/tensor.hpp"

namespace wmc {

enum class Init { xavier_uniform, he_uniform, zeros };

/// Fills `p` from a uniform fan-in/fan-out scaled range.
void initialize(Parameter& p, Index fan_in, Index fan_out, Init init, Rng& rng);

/// Fully connected layer y = W x + b, W stored [out x in].
class Dense {
public:
    Dense() = default;
    Dense(const std::string& name, Index in, Index out);

    Index in_features() const { return in_; }
    Index out_features() const { return out_; }

    void init(Rng& rng, Init init = Init::xavier_uniform);

    Vector forward(const Vector& x) const;
    /// Accumulates dW, db and returns dL/dx.
    Vector backward(const Vector& x, const Vector& dy);

    ParameterList parameters() { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;

private:
    Index in_ = 0;
    Index out_ = 0;
};

/// Inverted-dropout mask: each entry is 0 with probability p, else 1/(1-p).
Vector dropout_mask(Index n, double p, Rng& rng);

/// Softmax cross-entropy for one sample; writes dL/dlogits.
double softmax_cross_entropy(const Vector& logits, Index label, Vector& dlogits);

enum class OptimizerKind { sgd, adam };

/// First-order optimizer over a fixed parameter list.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, ParameterList params);

    /// Applies one update using each parameter's accumulated gradient scaled by `grad_scale`.
    void step(double grad_scale = 1.0);
    void zero_grad();

    OptimizerKind kind() const { return kind_; }
    long steps_taken() const { return t_; }

private:
    OptimizerKind kind_;
    double lr_;
    ParameterList params_;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
    long t_ = 0;

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
};

}  // namespace wmc
