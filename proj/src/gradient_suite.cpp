#include "wmc/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "wmc/attention.hpp"
#include "wmc/capsule.hpp"
#include "wmc/gmrnn.hpp"
#include "wmc/gradcheck.hpp"
#include "wmc/model.hpp"
#include "wmc/ops.hpp"
#include "wmc/sepconv.hpp"

namespace wmc {

const std::vector<std::string>& gradient_suite_modules() {
    static const std::vector<std::string> names{"tensor_core", "sepconv", "capsule", "attention", "gmrnn",
                                                "fusion_head"};
    return names;
}

namespace {

void fill_normal(Parameter& p, Rng& rng, double scale = 1.0) {
    for (Index k = 0; k < p.size(); ++k) p.value[k] = scale * rng.normal();
}

Vector random_vector(Index n, Rng& rng) {
    Vector v(n);
    for (Index k = 0; k < n; ++k) v[k] = rng.normal();
    return v;
}

struct Check {
    std::string module;
    std::string layer;
    std::function<GradcheckResult(Rng&)> run;
};

// tensor_core -------------------------------------------------------------------

GradcheckResult check_matmul(Rng& rng) {
    Parameter a("a", {3, 4}), b("b", {4, 2});
    fill_normal(a, rng);
    fill_normal(b, rng);
    const Tensor r({3, 2}, random_vector(6, rng));
    return gradcheck(
        [&](bool acc) {
            const Tensor c = matmul(a.value, b.value);
            if (acc) {
                auto [da, db] = matmul_backward(a.value, b.value, r);
                a.grad.data() += da.data();
                b.grad.data() += db.data();
            }
            return c.data().dot(r.data());
        },
        std::vector<Parameter*>{&a, &b});
}

GradcheckResult check_unary(Unary op, Rng& rng) {
    Parameter x("x", {7});
    fill_normal(x, rng);
    if (op == Unary::relu)  // keep clear of the kink
        for (Index k = 0; k < x.size(); ++k) x.value[k] += x.value[k] >= 0 ? 0.1 : -0.1;
    const Tensor r({7}, random_vector(7, rng));
    return gradcheck(
        [&](bool acc) {
            const Tensor y = elementwise(op, x.value);
            if (acc) x.grad.data() += elementwise_backward(op, x.value, y, r).data();
            return y.data().dot(r.data());
        },
        std::vector<Parameter*>{&x});
}

GradcheckResult check_binary(Binary op, Rng& rng) {
    Parameter a("a", {2, 3}), b("b", {2, 3});
    fill_normal(a, rng);
    fill_normal(b, rng);
    const Tensor r({2, 3}, random_vector(6, rng));
    return gradcheck(
        [&](bool acc) {
            const Tensor c = elementwise(op, a.value, b.value);
            if (acc) {
                auto [da, db] = elementwise_backward(op, a.value, b.value, r);
                a.grad.data() += da.data();
                b.grad.data() += db.data();
            }
            return c.data().dot(r.data());
        },
        std::vector<Parameter*>{&a, &b});
}

GradcheckResult check_softmax(Rng& rng) {
    Parameter x("x", {3, 4});
    fill_normal(x, rng);
    const Tensor r({3, 4}, random_vector(12, rng));
    return gradcheck(
        [&](bool acc) {
            const Tensor y = softmax(x.value, 1);
            if (acc) x.grad.data() += softmax_backward(y, r, 1).data();
            return y.data().dot(r.data());
        },
        std::vector<Parameter*>{&x});
}

// sepconv ------------------------------------------------------------------------

GradcheckResult check_block(Rng& rng, Index stride, Padding padding) {
    SepConvBlock block("block", 3, 4, 3, 3, stride, padding);
    block.init(rng);
    fill_normal(block.bias, rng, 0.1);
    Parameter input("input", {3, 7, 6});
    fill_normal(input, rng);
    const Tensor probe = block.forward(input.value);
    const Vector r = random_vector(probe.size(), rng);
    ParameterList params = block.parameters();
    params.push_back(&input);
    return gradcheck(
        [&](bool acc) {
            const Tensor mid = block.depthwise_forward(input.value);
            const Tensor out = block.pointwise_forward(mid);
            if (acc) {
                const Tensor dmid = block.pointwise_backward(mid, Tensor(out.shape(), r));
                input.grad.data() += block.depthwise_backward(input.value, dmid).data();
            }
            return out.data().dot(r);
        },
        params);
}

GradcheckResult check_extractor(Rng& rng) {
    FeatureExtractorConfig cfg;
    cfg.input_channels = 2;
    cfg.image_size = 8;
    cfg.channels = {3, 4};
    FeatureExtractor ex(cfg);
    ex.init(rng);
    for (auto& b : ex.blocks()) fill_normal(b.bias, rng, 0.1);
    Parameter image("image", {2, 8, 8});
    for (Index k = 0; k < image.size(); ++k) image.value[k] = rng.uniform();
    const Vector r = random_vector(ex.feature_dim(), rng);
    ParameterList params = ex.parameters();
    params.push_back(&image);
    return gradcheck(
        [&](bool acc) {
            const auto trace = ex.forward_trace(image.value);
            if (acc) image.grad.data() += ex.backward(trace, r).data();
            return trace.features.dot(r);
        },
        params);
}

// capsule ------------------------------------------------------------------------

GradcheckResult check_squash(Rng& rng) {
    Parameter z("z", {5});
    fill_normal(z, rng);
    const Vector r = random_vector(5, rng);
    return gradcheck(
        [&](bool acc) {
            const Vector v = squash(z.value.data());
            if (acc) z.grad.data() += squash_backward(z.value.data(), r);
            return v.dot(r);
        },
        std::vector<Parameter*>{&z});
}

GradcheckResult check_capsule_layer(Rng& rng) {
    CapsuleConfig cfg{4, 8, 3, 5, 3};
    CapsuleLayer layer(cfg);
    layer.init(rng);
    Parameter h("h", {4, 8});
    fill_normal(h, rng);
    const Matrix r = Eigen::Map<const Matrix>(random_vector(15, rng).data(), 3, 5);
    // Couplings come from routing at the unperturbed point and stay fixed.
    const Matrix couplings = layer.forward_trace(h.value.matrix()).routing.couplings;
    ParameterList params = layer.parameters();
    params.push_back(&h);
    return gradcheck(
        [&](bool acc) {
            if (acc) {
                const auto trace = layer.forward_trace(h.value.matrix());
                const Matrix dh = layer.backward(trace, r);
                h.grad.matrix(4, 8) += dh;
                return trace.routing.outputs.cwiseProduct(r).sum();
            }
            return layer.forward_fixed_couplings(h.value.matrix(), couplings).cwiseProduct(r).sum();
        },
        params);
}

// attention ----------------------------------------------------------------------

GradcheckResult check_self_attention(Rng& rng) {
    Parameter q("q", {4, 3});
    fill_normal(q, rng);
    const Matrix r = Eigen::Map<const Matrix>(random_vector(12, rng).data(), 4, 3);
    return gradcheck(
        [&](bool acc) {
            const Matrix qm = q.value.matrix();
            const auto fwd = self_attention(qm);
            if (acc) q.grad.matrix(4, 3) += self_attention_backward(qm, fwd, r);
            return fwd.output.cwiseProduct(r).sum();
        },
        std::vector<Parameter*>{&q});
}

GradcheckResult check_image_vector(Rng& rng) {
    ImageVectorLayer layer(AttentionConfig{3, 4, 5});
    layer.init(rng);
    fill_normal(layer.projection.bias, rng, 0.1);
    Parameter caps("capsules", {3, 4});
    fill_normal(caps, rng, 0.5);
    const Vector r = random_vector(5, rng);
    ParameterList params = layer.parameters();
    params.push_back(&caps);
    return gradcheck(
        [&](bool acc) {
            auto [trace, out] = layer.forward_trace(caps.value.matrix());
            if (acc) caps.grad.matrix(3, 4) += layer.backward(trace, r);
            return out.dot(r);
        },
        params);
}

// gmrnn --------------------------------------------------------------------------

GradcheckResult check_gmrnn(Rng& rng) {
    GmrnnCell cell(GmrnnConfig{5, 4, 1.0, 1.0});
    cell.init(rng);
    for (Parameter* p : cell.parameters())
        if (p->value.rank() == 1) fill_normal(*p, rng, 0.2);
    std::vector<Parameter> xs;
    for (int k = 0; k < 3; ++k) {
        xs.emplace_back("x" + std::to_string(k), Shape{5});
        fill_normal(xs.back(), rng);
    }
    auto inputs = [&] {
        std::vector<Vector> v;
        for (const auto& x : xs) v.push_back(x.value.data());
        return v;
    };
    const auto w_hats = ridge_trajectory(inputs(), 1.0, 1.0);  // frozen
    const Vector r = random_vector(4, rng);
    ParameterList params = cell.parameters();
    for (auto& x : xs) params.push_back(&x);
    return gradcheck(
        [&](bool acc) {
            const auto in = inputs();
            const auto trace = cell.forward(in, w_hats);
            if (acc) {
                const auto dxs = cell.backward(trace, r);
                for (std::size_t k = 0; k < xs.size(); ++k) xs[k].grad.data() += dxs[k];
            }
            return trace.hidden().dot(r);
        },
        params);
}

// fusion head and whole model -------------------------------------------------------

FusionModelConfig tiny_model_config(std::uint64_t seed) {
    FusionModelConfig cfg;
    cfg.classes = {"D", "P", "S"};
    cfg.extractor.input_channels = 3;
    cfg.extractor.image_size = 8;
    cfg.extractor.channels = {2, 3};
    // One routing iteration keeps couplings uniform, hence exactly constant.
    cfg.capsule = CapsuleConfig{2, 3, 2, 3, 1};
    cfg.image_dim = 4;
    cfg.location_count = 5;
    cfg.embedding_dim = 3;
    cfg.hidden = 3;
    cfg.head = {6};
    cfg.dropout = 0.0;
    cfg.seed = seed;
    return cfg;
}

Sample tiny_sample(Rng& rng) {
    Sample s;
    s.image = Tensor({3, 8, 8});
    for (Index k = 0; k < s.image->size(); ++k) (*s.image)[k] = rng.uniform();
    s.locations = {2, 4};
    return s;
}

GradcheckResult check_model(Rng& rng, Mode mode, LocationEncoding enc, bool head_only) {
    FusionModelConfig cfg = tiny_model_config(rng());
    cfg.mode = mode;
    cfg.location_encoding = enc;
    FusionModel model(cfg);
    for (Parameter* p : model.parameters())
        if (p->value.rank() == 1) fill_normal(*p, rng, 0.1);
    if (enc == LocationEncoding::embedding) {
        // Estimates are not differentiated; with W_m = 0 they do not affect the output.
        model.gmrnn.w_m.value.data().setZero();
    }
    const Sample sample = tiny_sample(rng);
    ParameterList params;
    if (head_only) {
        for (auto& d : model.head)
            for (Parameter* p : d.parameters()) params.push_back(p);
    } else {
        for (Parameter* p : model.parameters())
            if (!(enc == LocationEncoding::embedding && p == &model.gmrnn.w_m)) params.push_back(p);
    }
    return gradcheck(
        [&](bool acc) {
            const auto trace = model.forward(sample, mode, nullptr);
            if (acc) return model.backward(trace, 1);
            Vector unused;
            return softmax_cross_entropy(trace.logits, 1, unused);
        },
        params);
}

std::vector<Check> all_checks() {
    return {
        {"tensor_core", "matmul", check_matmul},
        {"tensor_core", "sigmoid", [](Rng& r) { return check_unary(Unary::sigmoid, r); }},
        {"tensor_core", "tanh", [](Rng& r) { return check_unary(Unary::tanh, r); }},
        {"tensor_core", "relu", [](Rng& r) { return check_unary(Unary::relu, r); }},
        {"tensor_core", "add", [](Rng& r) { return check_binary(Binary::add, r); }},
        {"tensor_core", "mul", [](Rng& r) { return check_binary(Binary::mul, r); }},
        {"tensor_core", "softmax", check_softmax},
        {"sepconv", "block_same_stride1", [](Rng& r) { return check_block(r, 1, Padding::same); }},
        {"sepconv", "block_valid_stride2", [](Rng& r) { return check_block(r, 2, Padding::valid); }},
        {"sepconv", "two_block_stack", check_extractor},
        {"capsule", "squash", check_squash},
        {"capsule", "layer_final_iteration", check_capsule_layer},
        {"attention", "self_attention", check_self_attention},
        {"attention", "image_vector", check_image_vector},
        {"gmrnn", "cell_3_step_unroll", check_gmrnn},
        {"fusion_head", "head_layers",
         [](Rng& r) { return check_model(r, Mode::multimodal, LocationEncoding::one_hot, true); }},
        {"fusion_head", "multimodal_end_to_end",
         [](Rng& r) { return check_model(r, Mode::multimodal, LocationEncoding::one_hot, false); }},
        {"fusion_head", "location_embedding_end_to_end",
         [](Rng& r) { return check_model(r, Mode::location_only, LocationEncoding::embedding, false); }},
    };
}

}  // namespace

std::vector<GradcheckRow> run_gradient_suite(const std::string& scope, std::uint64_t seed, double tolerance) {
    const auto& modules = gradient_suite_modules();
    if (scope != "all" && std::find(modules.begin(), modules.end(), scope) == modules.end())
        throw ConfigError("unknown gradcheck scope '" + scope + "'");
    std::vector<GradcheckRow> rows;
    std::uint64_t index = 0;
    for (const auto& check : all_checks()) {
        ++index;
        if (scope != "all" && check.module != scope) continue;
        Rng rng = Rng::derive(seed, index);
        const auto started = std::chrono::steady_clock::now();
        const GradcheckResult r = check.run(rng);
        GradcheckRow row;
        row.module = check.module;
        row.layer = check.layer;
        row.max_relative_error = r.max_relative_error;
        row.worst_parameter = r.worst_parameter;
        row.entries = r.entries_checked;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        row.passed = r.max_relative_error <= tolerance;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace wmc
