#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wmc/gradcheck.hpp"
#include "wmc/gradient_suite.hpp"
#include "wmc/ops.hpp"

using namespace wmc;

TEST(Tensor, ShapeInvariants) {
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.size(), 24);
    EXPECT_EQ(t.rank(), 3);
    EXPECT_FALSE(t.has_grad());
    t.grad()[5] = 1.0;
    EXPECT_EQ(t.grad().size(), t.size());
    EXPECT_THROW(Tensor({3, 0}), DimensionError);
    EXPECT_THROW(Tensor(Shape{}), DimensionError);
    EXPECT_THROW(Tensor({2, 2}, Vector::Zero(3)), DimensionError);
    EXPECT_THROW(t.matrix(5, 5), DimensionError);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r.data(), t.data());
    EXPECT_EQ(r.matrix()(2, 1), 6.0);
}

TEST(Matmul, Identity) {
    const Tensor i2({2, 2}, {1, 0, 0, 1});
    EXPECT_EQ(matmul(i2, i2), i2);
}

TEST(Matmul, HandEvaluation) {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {0, 1});
    EXPECT_EQ(matmul(a, b), Tensor({2, 1}, {2, 4}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL();
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    }
}

TEST(Elementwise, Fixtures) {
    EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
    EXPECT_DOUBLE_EQ(std::tanh(0.0), 0.0);
    EXPECT_NEAR(sigmoid(0.5), 0.622459, 1e-6);
    const Tensor x({3}, {-1000.0, 0.0, 1000.0});
    const Tensor s = elementwise(Unary::sigmoid, x);
    EXPECT_TRUE(s.all_finite());
    EXPECT_NEAR(s[0], 0.0, 1e-300);
    EXPECT_EQ(s[2], 1.0);
    const Tensor r = elementwise(Unary::relu, x);
    EXPECT_EQ(r, Tensor({3}, {0.0, 0.0, 1000.0}));
}

TEST(Elementwise, BinaryShapesMustMatch) {
    EXPECT_THROW(elementwise(Binary::add, Tensor({2}), Tensor({3})), DimensionError);
    const Tensor a({2}, {1, 2});
    EXPECT_EQ(elementwise(Binary::mul, a, 3.0), Tensor({2}, {3, 6}));
}

TEST(Softmax, Fixtures) {
    const Vector u = softmax(Vector::Zero(4));
    for (Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(u[k], 0.25);

    const Vector big = softmax(Vector{{1000.0, 0.0}});
    EXPECT_TRUE(big.allFinite());
    EXPECT_NEAR(big[0], 1.0, 1e-15);
    EXPECT_LT(big[1], 1e-300);

    const Vector p = softmax(Vector{{1.0, 2.0, 3.0}});
    EXPECT_NEAR(p[0], 0.09003, 5e-6);
    EXPECT_NEAR(p[1], 0.24473, 5e-6);
    EXPECT_NEAR(p[2], 0.66524, 5e-6);
}

TEST(Softmax, NormalizationAndShiftInvariance) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector x = testutil::random_vector(1 + Index(rng.below(12)), rng, -20, 20);
        const Vector p = softmax(x);
        EXPECT_NEAR(p.sum(), 1.0, 1e-12);
        EXPECT_GE(p.minCoeff(), 0.0);
        const double shift = rng.uniform(-50, 50);
        EXPECT_LE((softmax((x.array() + shift).matrix()) - p).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Softmax, TensorAxis) {
    const Tensor x({2, 3}, {1, 2, 3, 1, 1, 1});
    const Tensor rows = softmax(x, 1);
    EXPECT_NEAR(rows[0] + rows[1] + rows[2], 1.0, 1e-15);
    EXPECT_NEAR(rows[3], 1.0 / 3.0, 1e-15);
    const Tensor cols = softmax(x, 0);
    EXPECT_NEAR(cols[0] + cols[3], 1.0, 1e-15);
    EXPECT_THROW(softmax(x, 2), DimensionError);
}

TEST(Gradcheck, ExactQuadratic) {
    Rng rng(3);
    Parameter x("x", {5});
    x.value = testutil::random_tensor({5}, rng);
    auto loss = [&](bool accumulate) {
        if (accumulate) x.grad.data() += 2.0 * x.value.data();
        return x.value.data().squaredNorm();
    };
    Parameter* params[] = {&x};
    const auto r = gradcheck(loss, params);
    EXPECT_LE(r.max_relative_error, 1e-7);
    EXPECT_EQ(r.entries_checked, 5);
}

TEST(Gradcheck, DetectsWrongGradient) {
    Parameter x("x", {3});
    x.value.data() << 0.5, -1.0, 2.0;
    auto loss = [&](bool accumulate) {
        if (accumulate) x.grad.data() += 3.0 * x.value.data();  // true gradient is 2x
        return x.value.data().squaredNorm();
    };
    Parameter* params[] = {&x};
    EXPECT_GT(gradcheck(loss, params).max_relative_error, 0.1);
}

TEST(Gradcheck, NonFiniteLossIsNumericError) {
    Parameter x("x", {1});
    auto loss = [&](bool) { return std::log(-1.0 - x.value[0] * x.value[0]); };
    Parameter* params[] = {&x};
    EXPECT_THROW(gradcheck(loss, params), NumericError);
}

TEST(Gradcheck, TensorCoreSuite) {
    for (const auto& row : run_gradient_suite("tensor_core")) EXPECT_TRUE(row.passed) << row.layer;
}

TEST(Parameters, UniqueNames) {
    Parameter a("w", {1}), b("w", {1});
    Parameter* ps[] = {&a, &b};
    EXPECT_THROW(check_unique_names(ps), ConfigError);
}
