#include "wmc/gmrnn.hpp"

#include "wmc/ops.hpp"

namespace wmc {

RidgeEstimator::RidgeEstimator(Index dim, double lambda, double sigma2)
    : dim_(dim), lambda_(lambda), sigma2_(sigma2) {
    if (dim < 1) throw ConfigError("ridge estimator dimension must be positive");
    // With no observations the Gram matrix is zero, so a non-positive prior
    // precision leaves the system singular.
    if (!(lambda > 0.0)) throw ConfigError("ridge estimator needs lambda > 0, got " + std::to_string(lambda));
    if (!(sigma2 > 0.0)) throw ConfigError("ridge estimator needs sigma^2 > 0, got " + std::to_string(sigma2));
    reset();
}

void RidgeEstimator::reset() {
    gram_ = Eigen::MatrixXd::Zero(dim_, dim_);
    moment_ = Vector::Zero(dim_);
    count_ = 0;
}

void RidgeEstimator::observe(const Vector& x, double y) {
    if (x.size() != dim_)
        throw DimensionError("ridge estimator: observation length " + std::to_string(x.size()) + ", expected " +
                             std::to_string(dim_));
    require_finite(x, "ridge observation");
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(x);
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
    moment_ += x * y;
    ++count_;
}

Vector RidgeEstimator::solve() const {
    Eigen::MatrixXd system = gram_;
    system.diagonal().array() += sigma2_ * lambda_;
    const Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) throw NumericError("ridge estimator: system not positive definite");
    return llt.solve(moment_);
}

std::vector<Vector> ridge_trajectory(std::span<const Vector> inputs, double lambda, double sigma2) {
    if (inputs.empty()) return {};
    RidgeEstimator est(inputs.front().size(), lambda, sigma2);
    std::vector<Vector> out;
    out.reserve(inputs.size());
    for (const Vector& x : inputs) out.push_back(est.update_and_solve(x, 1.0));
    return out;
}

void GmrnnConfig::validate() const {
    if (input_dim < 1 || hidden < 1) throw ConfigError("GMRNN dimensions must be positive");
    if (!(lambda > 0.0) || !(sigma2 > 0.0)) throw ConfigError("GMRNN ridge lambda and sigma^2 must be positive");
}

GmrnnCell::GmrnnCell(GmrnnConfig config, const std::string& name)
    : w_f(name + ".W_f", {config.hidden, config.input_dim}),
      u_f(name + ".U_f", {config.hidden, config.hidden}),
      b_f(name + ".b_f", {config.hidden}),
      w_i(name + ".W_i", {config.hidden, config.input_dim}),
      u_i(name + ".U_i", {config.hidden, config.hidden}),
      b_i(name + ".b_i", {config.hidden}),
      w_g(name + ".W_g", {config.hidden, config.input_dim}),
      u_g(name + ".U_g", {config.hidden, config.hidden}),
      b_g(name + ".b_g", {config.hidden}),
      w_o(name + ".W_o", {config.hidden, config.input_dim}),
      u_o(name + ".U_o", {config.hidden, config.hidden}),
      b_o(name + ".b_o", {config.hidden}),
      w_m(name + ".W_m", {config.hidden, config.input_dim}),
      u_m(name + ".U_m", {config.hidden, config.hidden}),
      b_m(name + ".b_m", {config.hidden}),
      config_(config) {
    config_.validate();
}

ParameterList GmrnnCell::parameters() {
    return {&w_f, &u_f, &b_f, &w_i, &u_i, &b_i, &w_g, &u_g, &b_g, &w_o, &u_o, &b_o, &w_m, &u_m, &b_m};
}

void GmrnnCell::init(Rng& rng) {
    const Index D = config_.input_dim, H = config_.hidden;
    for (Parameter* w : {&w_f, &w_i, &w_g, &w_o, &w_m}) initialize(*w, D, H, Init::xavier_uniform, rng);
    for (Parameter* u : {&u_f, &u_i, &u_g, &u_o, &u_m}) initialize(*u, H, H, Init::xavier_uniform, rng);
    for (Parameter* b : {&b_f, &b_i, &b_g, &b_o, &b_m}) b->value.data().setZero();
}

void GmrnnCell::require_input(const Vector& x, const char* what) const {
    if (x.size() != config_.input_dim)
        throw DimensionError(w_f.name + ": " + what + " has length " + std::to_string(x.size()) + ", expected " +
                             std::to_string(config_.input_dim));
}

GmrnnCell::Step GmrnnCell::step(const Vector& x, const Vector& w_hat, const Vector& h_prev,
                                const Vector& c_prev) const {
    require_input(x, "input");
    require_input(w_hat, "MAP estimate");
    const Index D = config_.input_dim, H = config_.hidden;
    if (h_prev.size() != H || c_prev.size() != H) throw DimensionError(w_f.name + ": recurrent state size mismatch");
    auto gate = [&](const Parameter& w, const Parameter& u, const Parameter& b, const Vector& in) -> Vector {
        return w.matrix(H, D) * in + u.matrix(H, H) * h_prev + b.value.data();
    };
    Step s;
    s.x = x;
    s.w_hat = w_hat;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    s.f = sigmoid(gate(w_f, u_f, b_f, x));
    s.i = sigmoid(gate(w_i, u_i, b_i, x));
    s.g = tanh(gate(w_g, u_g, b_g, x));
    s.o = sigmoid(gate(w_o, u_o, b_o, x));
    s.m = sigmoid(gate(w_m, u_m, b_m, w_hat));
    s.c = sigmoid(Vector(s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g) + s.m));
    s.tanh_c = tanh(s.c);
    s.h = s.tanh_c.cwiseProduct(s.o);
    return s;
}

GmrnnCell::Trace GmrnnCell::forward(std::span<const Vector> inputs, std::span<const Vector> w_hats) const {
    if (inputs.empty()) throw DomainError("GMRNN needs a non-empty input sequence");
    if (inputs.size() != w_hats.size()) throw DimensionError("GMRNN: one MAP estimate is required per input step");
    Trace t;
    Vector h = Vector::Zero(config_.hidden), c = Vector::Zero(config_.hidden);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        t.steps.push_back(step(inputs[k], w_hats[k], h, c));
        h = t.steps.back().h;
        c = t.steps.back().c;
    }
    return t;
}

GmrnnCell::Trace GmrnnCell::forward(std::span<const Vector> inputs) const {
    if (inputs.empty()) throw DomainError("GMRNN needs a non-empty input sequence");
    for (const Vector& x : inputs) require_input(x, "input");
    const auto w_hats = ridge_trajectory(inputs, config_.lambda, config_.sigma2);
    return forward(inputs, w_hats);
}

Vector GmrnnCell::location_vector(std::span<const Vector> inputs) const { return forward(inputs).hidden(); }

std::vector<Vector> GmrnnCell::backward(const Trace& trace, const Vector& dh_final) {
    const Index D = config_.input_dim, H = config_.hidden;
    std::vector<Vector> dxs(trace.steps.size());
    Vector dh = dh_final;
    Vector dc = Vector::Zero(H);
    for (std::size_t k = trace.steps.size(); k-- > 0;) {
        const Step& s = trace.steps[k];
        const Vector d_o = dh.cwiseProduct(s.tanh_c);
        dc += dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
        const Vector dpre = dc.cwiseProduct((s.c.array() * (1.0 - s.c.array())).matrix());

        const Vector zf = (dpre.cwiseProduct(s.c_prev).array() * s.f.array() * (1.0 - s.f.array())).matrix();
        const Vector zi = (dpre.cwiseProduct(s.g).array() * s.i.array() * (1.0 - s.i.array())).matrix();
        const Vector zg = (dpre.cwiseProduct(s.i).array() * (1.0 - s.g.array().square())).matrix();
        const Vector zo = (d_o.array() * s.o.array() * (1.0 - s.o.array())).matrix();
        const Vector zm = (dpre.array() * s.m.array() * (1.0 - s.m.array())).matrix();

        Vector dh_prev = Vector::Zero(H);
        Vector dx = Vector::Zero(D);
        auto accumulate = [&](Parameter& w, Parameter& u, Parameter& b, const Vector& z, const Vector& in,
                              bool feeds_input) {
            w.grad_matrix(H, D).noalias() += z * in.transpose();
            u.grad_matrix(H, H).noalias() += z * s.h_prev.transpose();
            b.grad.data() += z;
            dh_prev.noalias() += u.matrix(H, H).transpose() * z;
            if (feeds_input) dx.noalias() += w.matrix(H, D).transpose() * z;
        };
        accumulate(w_f, u_f, b_f, zf, s.x, true);
        accumulate(w_i, u_i, b_i, zi, s.x, true);
        accumulate(w_g, u_g, b_g, zg, s.x, true);
        accumulate(w_o, u_o, b_o, zo, s.x, true);
        accumulate(w_m, u_m, b_m, zm, s.w_hat, false);

        dxs[k] = std::move(dx);
        dh = std::move(dh_prev);
        dc = dpre.cwiseProduct(s.f);
    }
    return dxs;
}

}  // namespace wmc
