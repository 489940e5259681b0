#pragma once

#include <concepts>
#include <utility>

#include "wmc/tensor.hpp"

namespace wmc {

// Generic Eigen-expression helpers ------------------------------------------

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
    // Split by sign so exp never overflows.
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename Derived>
auto tanh(const Eigen::MatrixBase<Derived>& x) {
    return x.array().tanh().matrix();
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

/// Numerically stable softmax of a vector (max-subtracted).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    if (logits.size() < 1) throw DimensionError("softmax needs at least one entry");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.derived().reshaped().array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

/// Vector-Jacobian product of softmax given its output p.
template <typename DerivedP, typename DerivedG>
Eigen::Matrix<typename DerivedP::Scalar, Eigen::Dynamic, 1> softmax_backward(const Eigen::MatrixBase<DerivedP>& p,
                                                                           const Eigen::MatrixBase<DerivedG>& dp) {
    const auto dot = p.reshaped().dot(dp.reshaped());
    return (p.reshaped().array() * (dp.reshaped().array() - dot)).matrix();
}

/// Row-wise softmax of a matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(logits.rows(),
                                                                                               logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) out.row(r) = softmax(logits.row(r).transpose()).transpose();
    return out;
}

// Tensor-level ops with explicit backward rules ------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

/// Returns (dL/da, dL/db) for c = a*b given dL/dc.
std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

enum class Unary { sigmoid, tanh, relu };
enum class Binary { add, mul };

Tensor elementwise(Unary op, const Tensor& x);
/// dL/dx given x, y = op(x) and dL/dy.
Tensor elementwise_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& dy);

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> elementwise_backward(Binary op, const Tensor& a, const Tensor& b, const Tensor& dc);

/// Tensor-scalar forms; the only broadcasting permitted.
Tensor elementwise(Binary op, const Tensor& a, double s);

/// Softmax along `axis`; every 1-D fibre along that axis sums to one.
Tensor softmax(const Tensor& x, Index axis);
Tensor softmax_backward(const Tensor& y, const Tensor& dy, Index axis);

}  // namespace wmc
