#pragma once

#include <string>
#include <vector>

#include "wmc/ops.hpp"
#include "wmc/random.hpp"
#include "wmc/tensor.hpp"

namespace wmc {

/// Squash nonlinearity: (|z|^2 / (1 + |z|^2)) * z / |z|, with squash(0) = 0.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> squash(const Eigen::MatrixBase<Derived>& z) {
    using Scalar = typename Derived::Scalar;
    const Scalar n2 = z.squaredNorm();
    if (n2 == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(z.size());
    const Scalar n = std::sqrt(n2);
    return z.reshaped() * (n / (Scalar(1) + n2));
}

/// dL/dz for v = squash(z) given dL/dv.
template <typename DerivedZ, typename DerivedG>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> squash_backward(const Eigen::MatrixBase<DerivedZ>& z,
                                                                          const Eigen::MatrixBase<DerivedG>& dv) {
    using Scalar = typename DerivedZ::Scalar;
    const Scalar n2 = z.squaredNorm();
    if (n2 == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(z.size());
    const Scalar n = std::sqrt(n2);
    const Scalar scale = n / (Scalar(1) + n2);
    // d(scale)/dn = (1 - n^2) / (1 + n^2)^2, and dn/dz = z / n.
    const Scalar dscale_over_n = (Scalar(1) - n2) / ((Scalar(1) + n2) * (Scalar(1) + n2)) / n;
    return scale * dv.reshaped() + z.reshaped() * (dscale_over_n * z.reshaped().dot(dv.reshaped()));
}

struct CapsuleConfig {
    Index input_capsules = 32;
    Index input_dim = 8;
    Index output_capsules = 16;
    Index output_dim = 16;
    int routing_iterations = 3;

    void validate() const;
};

/// Outcome of dynamic routing over a set of prediction vectors.
struct RoutingResult {
    Matrix outputs;                       // [N_out x d_out], v_j
    Matrix pre_squash;                    // [N_out x d_out], Z_j of the final iteration
    Matrix couplings;                     // [N_in x N_out], c_ij of the final iteration
    std::vector<Matrix> coupling_history; // one entry per iteration
};

/// Routing by agreement. `predictions` is [(N_in * N_out) x d_out] with row
/// i * N_out + j holding the prediction of input capsule i for output j.
RoutingResult dynamic_routing(const Matrix& predictions, Index input_capsules, Index output_capsules, int iterations);

/// Z_j = sum_i c_ij * u_{j|i}, v_j = squash(Z_j) with fixed couplings.
Matrix route_with_couplings(const Matrix& predictions, const Matrix& couplings, Matrix* pre_squash = nullptr);

/// Capsule layer: prediction vectors through per-pair transforms, then routing.
class CapsuleLayer {
public:
    struct Trace {
        Matrix inputs;       // [N_in x d_in]
        Matrix predictions;  // [(N_in * N_out) x d_out]
        RoutingResult routing;
    };

    CapsuleLayer() = default;
    CapsuleLayer(CapsuleConfig config, const std::string& name = "capsule");

    const CapsuleConfig& config() const { return config_; }

    void init(Rng& rng);

    /// u_{j|i} = W_ij h_i for every input/output pair.
    Matrix prediction_vectors(const Matrix& inputs) const;

    Matrix forward(const Matrix& inputs) const { return forward_trace(inputs).routing.outputs; }
    Trace forward_trace(const Matrix& inputs) const;

    /// Same layer with couplings held at `couplings`; the function the
    /// analytic backward differentiates.
    Matrix forward_fixed_couplings(const Matrix& inputs, const Matrix& couplings) const;

    /// Couplings of the final routing iteration are treated as constants.
    /// Accumulates dW and returns dL/dinputs.
    Matrix backward(const Trace& trace, const Matrix& doutputs);

    ParameterList parameters() { return {&weights}; }

    Parameter weights;  // [N_in x N_out x d_out x d_in]

private:
    void require_inputs(const Matrix& inputs) const;

    CapsuleConfig config_;
};

}  // namespace wmc
