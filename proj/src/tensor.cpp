#include "wmc/tensor.hpp"

#include <set>
#include <sstream>

#include "wmc/ops.hpp"

namespace wmc {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

void check_unique_names(std::span<Parameter* const> params) {
    std::set<std::string> seen;
    for (const Parameter* p : params)
        if (!seen.insert(p->name).second) throw ConfigError("duplicate parameter name '" + p->name + "'");
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
    return Tensor::from_matrix(a.matrix() * b.matrix());
}

std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
    require_matrix(dc, "matmul_backward");
    if (dc.dim(0) != a.dim(0) || dc.dim(1) != b.dim(1))
        throw DimensionError("matmul_backward: upstream gradient shape " + shape_string(dc.shape()) +
                             " does not match product of " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    return {Tensor::from_matrix(dc.matrix() * b.matrix().transpose()),
            Tensor::from_matrix(a.matrix().transpose() * dc.matrix())};
}

Tensor elementwise(Unary op, const Tensor& x) {
    Tensor y(x.shape());
    switch (op) {
        case Unary::sigmoid: y.data() = sigmoid(x.data()); break;
        case Unary::tanh: y.data() = tanh(x.data()); break;
        case Unary::relu: y.data() = relu(x.data()); break;
    }
    return y;
}

Tensor elementwise_backward(Unary op, const Tensor& x, const Tensor& y, const Tensor& dy) {
    require_same_shape(x, y, "elementwise_backward");
    require_same_shape(x, dy, "elementwise_backward");
    Tensor dx(x.shape());
    const auto ya = y.data().array();
    switch (op) {
        case Unary::sigmoid: dx.data() = (dy.data().array() * ya * (1.0 - ya)).matrix(); break;
        case Unary::tanh: dx.data() = (dy.data().array() * (1.0 - ya.square())).matrix(); break;
        case Unary::relu: dx.data() = (x.data().array() > 0.0).select(dy.data(), 0.0); break;
    }
    return dx;
}

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "elementwise");
    Tensor c(a.shape());
    if (op == Binary::add)
        c.data() = a.data() + b.data();
    else
        c.data() = a.data().cwiseProduct(b.data());
    return c;
}

std::pair<Tensor, Tensor> elementwise_backward(Binary op, const Tensor& a, const Tensor& b, const Tensor& dc) {
    require_same_shape(a, b, "elementwise_backward");
    require_same_shape(a, dc, "elementwise_backward");
    if (op == Binary::add) return {dc, dc};
    Tensor da(a.shape()), db(b.shape());
    da.data() = dc.data().cwiseProduct(b.data());
    db.data() = dc.data().cwiseProduct(a.data());
    return {da, db};
}

Tensor elementwise(Binary op, const Tensor& a, double s) {
    Tensor c(a.shape());
    if (op == Binary::add)
        c.data() = a.data().array() + s;
    else
        c.data() = a.data() * s;
    return c;
}

namespace {

// Visits every 1-D fibre along `axis` as (offset, stride, length).
template <typename F>
void for_each_fibre(const Shape& shape, Index axis, F&& f) {
    if (axis < 0 || axis >= Index(shape.size()))
        throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
    Index outer = 1, inner = 1;
    for (Index i = 0; i < axis; ++i) outer *= shape[std::size_t(i)];
    for (Index i = axis + 1; i < Index(shape.size()); ++i) inner *= shape[std::size_t(i)];
    const Index len = shape[std::size_t(axis)];
    for (Index o = 0; o < outer; ++o)
        for (Index in = 0; in < inner; ++in) f(o * len * inner + in, inner, len);
}

using Fibre = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;
using ConstFibre = Eigen::Map<const Vector, 0, Eigen::InnerStride<>>;

}  // namespace

Tensor softmax(const Tensor& x, Index axis) {
    Tensor y(x.shape());
    for_each_fibre(x.shape(), axis, [&](Index off, Index stride, Index len) {
        ConstFibre in(x.data().data() + off, len, Eigen::InnerStride<>(stride));
        Fibre out(y.data().data() + off, len, Eigen::InnerStride<>(stride));
        out = softmax(in);
    });
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy, Index axis) {
    require_same_shape(y, dy, "softmax_backward");
    Tensor dx(y.shape());
    for_each_fibre(y.shape(), axis, [&](Index off, Index stride, Index len) {
        ConstFibre p(y.data().data() + off, len, Eigen::InnerStride<>(stride));
        ConstFibre g(dy.data().data() + off, len, Eigen::InnerStride<>(stride));
        Fibre out(dx.data().data() + off, len, Eigen::InnerStride<>(stride));
        out = softmax_backward(p, g);
    });
    return dx;
}

}  // namespace wmc
