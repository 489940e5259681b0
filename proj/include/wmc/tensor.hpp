#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wmc/errors.hpp"

namespace wmc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

std::string shape_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer of the same shape.
///
/// Every dimension is strictly positive; zero-sized tensors are rejected at
/// construction so that degenerate shapes surface early instead of producing
/// silently empty results downstream.
template <typename Scalar>
class BasicTensor {
public:
    using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
        data_ = Storage::Zero(checked_size(shape_));
    }

    BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
    }

    BasicTensor(Shape shape, std::initializer_list<Scalar> values)
        : BasicTensor(std::move(shape), Storage(Eigen::Map<const Storage>(values.begin(), Index(values.size())))) {}

    static BasicTensor from_matrix(const RowMajorMatrix& m) {
        return BasicTensor({m.rows(), m.cols()}, Eigen::Map<const Storage>(m.data(), m.size()));
    }

    static BasicTensor from_vector(const Storage& v) { return BasicTensor({v.size()}, v); }

    const Shape& shape() const { return shape_; }
    Index rank() const { return Index(shape_.size()); }
    Index dim(Index axis) const { return shape_.at(std::size_t(axis)); }
    Index size() const { return data_.size(); }

    Storage& data() { return data_; }
    const Storage& data() const { return data_; }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    /// Rank-2 view of the data as rows x cols, where rows*cols == size().
    Eigen::Map<RowMajorMatrix> matrix(Index rows, Index cols) {
        check_view(rows, cols);
        return {data_.data(), rows, cols};
    }
    Eigen::Map<const RowMajorMatrix> matrix(Index rows, Index cols) const {
        check_view(rows, cols);
        return {data_.data(), rows, cols};
    }
    /// Natural matrix view of a rank-2 tensor.
    Eigen::Map<RowMajorMatrix> matrix() {
        require_rank(2);
        return matrix(shape_[0], shape_[1]);
    }
    Eigen::Map<const RowMajorMatrix> matrix() const {
        require_rank(2);
        return matrix(shape_[0], shape_[1]);
    }

    bool has_grad() const { return grad_.has_value(); }
    Storage& grad() {
        if (!grad_) grad_ = Storage::Zero(data_.size());
        return *grad_;
    }
    const Storage& grad() const {
        if (!grad_) throw DomainError("tensor has no gradient buffer");
        return *grad_;
    }
    void zero_grad() { grad() = Storage::Zero(data_.size()); }
    void drop_grad() { grad_.reset(); }

    bool all_finite() const { return data_.allFinite(); }

    BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static Index checked_size(const Shape& shape) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
        Index n = 1;
        for (Index d : shape) {
            if (d <= 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a non-positive dimension");
            n *= d;
        }
        return n;
    }
    void require_rank(Index r) const {
        if (rank() != r)
            throw DimensionError("expected rank " + std::to_string(r) + " tensor, got shape " + shape_string(shape_));
    }
    void check_view(Index rows, Index cols) const {
        if (rows * cols != data_.size())
            throw DimensionError("cannot view shape " + shape_string(shape_) + " as " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
    }

    Shape shape_;
    Storage data_;
    std::optional<Storage> grad_;
};

using Tensor = BasicTensor<double>;

/// Trainable tensor plus its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name_, Shape shape) : name(std::move(name_)), value(shape), grad(std::move(shape)) {}

    Index size() const { return value.size(); }
    void zero_grad() { grad.data().setZero(); }

    auto matrix(Index rows, Index cols) { return value.matrix(rows, cols); }
    auto matrix(Index rows, Index cols) const { return value.matrix(rows, cols); }
    auto grad_matrix(Index rows, Index cols) { return grad.matrix(rows, cols); }
};

using ParameterList = std::vector<Parameter*>;

/// Throws if two parameters share a name.
void check_unique_names(std::span<Parameter* const> params);

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values, const std::string& what) {
    if (!values.allFinite()) throw NumericError(what + " produced a non-finite value");
}

}  // namespace wmc
