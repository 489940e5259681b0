#pragma once

#include <span>
#include <string>
#include <vector>

#include "wmc/layers.hpp"
#include "wmc/random.hpp"
#include "wmc/tensor.hpp"

namespace wmc {

/// Online MAP estimate of linear-Gaussian weights under a zero-mean Gaussian
/// prior with precision lambda and noise variance sigma^2.
///
/// Keeps the sufficient statistics A = sum x x^T and b = sum x y, so the
/// estimate after any number of observations is the exact minimizer of
///
///     (1 / 2 sigma^2) sum_k (y_k - x_k^T w)^2 + (lambda / 2) w^T w,
///
/// namely w = (A + sigma^2 lambda I)^-1 b.
class RidgeEstimator {
public:
    RidgeEstimator(Index dim, double lambda = 1.0, double sigma2 = 1.0);

    Index dim() const { return dim_; }
    double lambda() const { return lambda_; }
    double sigma2() const { return sigma2_; }
    const Eigen::MatrixXd& gram() const { return gram_; }
    const Vector& moment() const { return moment_; }
    long observations() const { return count_; }

    void observe(const Vector& x, double y);
    Vector solve() const;
    Vector update_and_solve(const Vector& x, double y) {
        observe(x, y);
        return solve();
    }
    void reset();

private:
    Index dim_;
    double lambda_;
    double sigma2_;
    Eigen::MatrixXd gram_;
    Vector moment_;
    long count_ = 0;
};

/// MAP estimates after each element of `inputs`, regressing a unit response
/// onto each input with fresh statistics for the sequence.
std::vector<Vector> ridge_trajectory(std::span<const Vector> inputs, double lambda, double sigma2);

struct GmrnnConfig {
    Index input_dim = 323;
    Index hidden = 64;
    double lambda = 1.0;
    double sigma2 = 1.0;

    void validate() const;
};

/// Recurrent cell with LSTM-style f/i/g/o gates, a MAP gate m fed by the ridge
/// estimate, and a sigmoid-wrapped cell update:
///
///     C_t = sigmoid(f * C_{t-1} + i * g + m),   h_t = tanh(C_t) * o.
class GmrnnCell {
public:
    struct Step {
        Vector x, w_hat, h_prev, c_prev;
        Vector f, i, g, o, m;
        Vector c, tanh_c, h;
    };
    struct Trace {
        std::vector<Step> steps;
        const Vector& hidden() const { return steps.back().h; }
    };

    GmrnnCell() = default;
    GmrnnCell(GmrnnConfig config, const std::string& name = "gmrnn");

    const GmrnnConfig& config() const { return config_; }

    void init(Rng& rng);

    /// One step from (h_prev, c_prev) given input x and MAP estimate w_hat.
    Step step(const Vector& x, const Vector& w_hat, const Vector& h_prev, const Vector& c_prev) const;

    /// Unrolls over `inputs` from zero state with the supplied per-step
    /// estimates (w_hats[k] is the estimate after observing inputs[0..k]).
    Trace forward(std::span<const Vector> inputs, std::span<const Vector> w_hats) const;
    /// Unrolls over `inputs`, running the ridge estimator alongside.
    Trace forward(std::span<const Vector> inputs) const;

    /// Final hidden state, the location embedding.
    Vector location_vector(std::span<const Vector> inputs) const;

    /// Backpropagation through time from dL/dh_T. Estimates are constants.
    /// Accumulates parameter gradients; returns dL/dx for each step.
    std::vector<Vector> backward(const Trace& trace, const Vector& dh_final);

    ParameterList parameters();

    // Gate parameters: W_* [H x D], U_* [H x H], b_* [H]. The MAP gate uses W_m on w_hat.
    Parameter w_f, u_f, b_f;
    Parameter w_i, u_i, b_i;
    Parameter w_g, u_g, b_g;
    Parameter w_o, u_o, b_o;
    Parameter w_m, u_m, b_m;

private:
    void require_input(const Vector& x, const char* what) const;

    GmrnnConfig config_;
};

}  // namespace wmc
