#include "wmc/model.hpp"

#include <algorithm>

namespace wmc {

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::image_only: return "image_only";
        case Mode::location_only: return "location_only";
        case Mode::multimodal: return "multimodal";
    }
    return "?";
}

Mode parse_mode(const std::string& text) {
    if (text == "image_only") return Mode::image_only;
    if (text == "location_only") return Mode::location_only;
    if (text == "multimodal") return Mode::multimodal;
    throw ConfigError("unknown mode '" + text + "' (expected image_only, location_only or multimodal)");
}

std::string to_string(LocationEncoding enc) { return enc == LocationEncoding::one_hot ? "one_hot" : "embedding"; }

LocationEncoding parse_location_encoding(const std::string& text) {
    if (text == "one_hot") return LocationEncoding::one_hot;
    if (text == "embedding") return LocationEncoding::embedding;
    throw ConfigError("unknown location encoding '" + text + "' (expected one_hot or embedding)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + text + "' (expected adam or sgd)");
}

void FusionModelConfig::validate() const {
    if (classes.size() < 2) throw ConfigError("need at least two classes");
    for (const auto& c : classes)
        if (std::find(known_class_tokens().begin(), known_class_tokens().end(), c) == known_class_tokens().end())
            throw ConfigError("unknown class token '" + c + "'");
    extractor.validate();
    capsule.validate();
    if (image_dim < 1 || hidden < 1 || embedding_dim < 1 || location_count < 1)
        throw ConfigError("model dimensions must be positive");
    for (Index h : head)
        if (h < 1) throw ConfigError("head layer sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1), got " + std::to_string(dropout));
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train fraction must be in (0, 1]");
    if (augment_copies < 0) throw ConfigError("augment copies must be non-negative");
    if (!(ridge_lambda > 0.0) || !(ridge_sigma2 > 0.0)) throw ConfigError("ridge lambda and sigma^2 must be positive");
}

nlohmann::ordered_json FusionModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["classes"] = classes;
    j["mode"] = to_string(mode);
    j["image_size"] = extractor.image_size;
    j["extractor_channels"] = extractor.channels;
    j["kernel_size"] = extractor.kernel_size;
    j["global_average_pool"] = extractor.global_average_pool;
    j["input_capsules"] = capsule.input_capsules;
    j["input_capsule_dim"] = capsule.input_dim;
    j["output_capsules"] = capsule.output_capsules;
    j["output_capsule_dim"] = capsule.output_dim;
    j["routing_iterations"] = capsule.routing_iterations;
    j["image_dim"] = image_dim;
    j["location_count"] = location_count;
    j["location_encoding"] = to_string(location_encoding);
    j["embedding_dim"] = embedding_dim;
    j["hidden"] = hidden;
    j["ridge_lambda"] = ridge_lambda;
    j["ridge_sigma2"] = ridge_sigma2;
    j["head"] = head;
    j["dropout"] = dropout;
    j["optimizer"] = to_string(optimizer);
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["train_fraction"] = train_fraction;
    j["augment_copies"] = augment_copies;
    return j;
}

FusionModelConfig FusionModelConfig::from_json(const nlohmann::json& j) {
    FusionModelConfig c;
    try {
        c.classes = j.at("classes").get<std::vector<std::string>>();
        c.mode = parse_mode(j.at("mode").get<std::string>());
        c.extractor.image_size = j.at("image_size").get<Index>();
        c.extractor.channels = j.at("extractor_channels").get<std::vector<Index>>();
        c.extractor.kernel_size = j.at("kernel_size").get<Index>();
        c.extractor.global_average_pool = j.at("global_average_pool").get<bool>();
        c.capsule.input_capsules = j.at("input_capsules").get<Index>();
        c.capsule.input_dim = j.at("input_capsule_dim").get<Index>();
        c.capsule.output_capsules = j.at("output_capsules").get<Index>();
        c.capsule.output_dim = j.at("output_capsule_dim").get<Index>();
        c.capsule.routing_iterations = j.at("routing_iterations").get<int>();
        c.image_dim = j.at("image_dim").get<Index>();
        c.location_count = j.at("location_count").get<Index>();
        c.location_encoding = parse_location_encoding(j.at("location_encoding").get<std::string>());
        c.embedding_dim = j.at("embedding_dim").get<Index>();
        c.hidden = j.at("hidden").get<Index>();
        c.ridge_lambda = j.at("ridge_lambda").get<double>();
        c.ridge_sigma2 = j.at("ridge_sigma2").get<double>();
        c.head = j.at("head").get<std::vector<Index>>();
        c.dropout = j.at("dropout").get<double>();
        c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        c.learning_rate = j.at("learning_rate").get<double>();
        c.batch_size = j.at("batch_size").get<Index>();
        c.epochs = j.at("epochs").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.train_fraction = j.at("train_fraction").get<double>();
        c.augment_copies = j.at("augment_copies").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

Vector fuse(const Vector& image_vector, const Vector& location_vector) {
    Vector out(image_vector.size() + location_vector.size());
    out << image_vector, location_vector;
    return out;
}

FusionModel::EstimateCache::EstimateCache(const EstimateCache& other) {
    std::lock_guard lock(const_cast<std::mutex&>(other.mutex));
    entries = other.entries;
}

FusionModel::EstimateCache& FusionModel::EstimateCache::operator=(const EstimateCache& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex, const_cast<std::mutex&>(other.mutex));
        entries = other.entries;
    }
    return *this;
}

namespace {

FusionModelConfig validated(FusionModelConfig c) {
    c.validate();
    return c;
}

}  // namespace

FusionModel::FusionModel(FusionModelConfig config)
    : extractor(validated(config).extractor, "extractor"),
      primary("primary", config.extractor.feature_dim(), config.capsule.input_capsules * config.capsule.input_dim),
      capsule(config.capsule, "capsule"),
      attention(AttentionConfig{config.capsule.output_capsules, config.capsule.output_dim, config.image_dim},
                "image_vector"),
      gmrnn(GmrnnConfig{config.gmrnn_input_dim(), config.hidden, config.ridge_lambda, config.ridge_sigma2}, "gmrnn"),
      config_(std::move(config)) {
    if (config_.location_encoding == LocationEncoding::embedding)
        embedding = Parameter("location.embedding", {config_.location_count, config_.embedding_dim});
    Index in = config_.fused_dim();
    for (std::size_t k = 0; k < config_.head.size(); ++k) {
        head.emplace_back("head" + std::to_string(k), in, config_.head[k]);
        in = config_.head[k];
    }
    head.emplace_back("head" + std::to_string(config_.head.size()), in, config_.num_classes());

    Rng rng = Rng::derive(config_.seed, 0);
    extractor.init(rng);
    primary.init(rng);
    capsule.init(rng);
    attention.init(rng);
    if (config_.location_encoding == LocationEncoding::embedding)
        for (Index k = 0; k < embedding.size(); ++k) embedding.value[k] = 0.1 * rng.normal();
    gmrnn.init(rng);
    for (std::size_t k = 0; k < head.size(); ++k)
        head[k].init(rng, k + 1 < head.size() ? Init::he_uniform : Init::xavier_uniform);
    check_unique_names(parameters());
}

ParameterList FusionModel::parameters() {
    ParameterList out = extractor.parameters();
    for (Parameter* p : primary.parameters()) out.push_back(p);
    for (Parameter* p : capsule.parameters()) out.push_back(p);
    for (Parameter* p : attention.parameters()) out.push_back(p);
    if (config_.location_encoding == LocationEncoding::embedding) out.push_back(&embedding);
    for (Parameter* p : gmrnn.parameters()) out.push_back(p);
    for (auto& d : head)
        for (Parameter* p : d.parameters()) out.push_back(p);
    return out;
}

std::vector<NamedTensor> FusionModel::named_tensors() const {
    std::vector<NamedTensor> out;
    for (const Parameter* p : const_cast<FusionModel*>(this)->parameters()) out.push_back({p->name, p->value});
    return out;
}

void FusionModel::load_tensors(const std::vector<NamedTensor>& tensors) {
    auto params = parameters();
    if (tensors.size() != params.size())
        throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    for (Parameter* p : params) {
        const auto it = by_name.find(p->name);
        if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + p->name + "'");
        if (it->second->value.shape() != p->value.shape())
            throw FormatError("checkpoint tensor '" + p->name + "' has shape " +
                              shape_string(it->second->value.shape()) + ", model expects " +
                              shape_string(p->value.shape()));
    }
    for (Parameter* p : params) p->value = by_name[p->name]->value;
}

// Image branch -------------------------------------------------------------------

FusionModel::ImageTrace FusionModel::image_forward(const Tensor& image) const {
    ImageTrace t;
    t.extractor = extractor.forward_trace(image);
    t.primary_pre = primary.forward(t.extractor.features);
    const Matrix caps_in =
        Eigen::Map<const Matrix>(t.primary_pre.data(), config_.capsule.input_capsules, config_.capsule.input_dim);
    t.capsule = capsule.forward_trace(caps_in);
    auto [att, img] = attention.forward_trace(t.capsule.routing.outputs);
    t.attention = std::move(att);
    t.image_vector = std::move(img);
    return t;
}

void FusionModel::image_backward(const ImageTrace& t, const Vector& dimage) {
    const Matrix dcaps_out = attention.backward(t.attention, dimage);
    const Matrix dcaps_in = capsule.backward(t.capsule, dcaps_out);
    const Vector dprimary = Eigen::Map<const Vector>(dcaps_in.data(), dcaps_in.size());
    const Vector dfeatures = primary.backward(t.extractor.features, dprimary);
    extractor.backward(t.extractor, dfeatures);
}

Vector FusionModel::image_vector(const Tensor& image) const { return image_forward(image).image_vector; }

// Location branch ------------------------------------------------------------------

std::vector<Vector> FusionModel::location_inputs(const std::vector<Index>& locations) const {
    if (locations.empty()) throw DomainError("location sequence is empty");
    std::vector<Vector> xs;
    for (Index loc : locations) {
        if (loc < 0 || loc >= config_.location_count)
            throw InputError("location index " + std::to_string(loc) + " outside [0, " +
                             std::to_string(config_.location_count) + ")");
        if (config_.location_encoding == LocationEncoding::one_hot) {
            Vector x = Vector::Zero(config_.location_count);
            x[loc] = 1.0;
            xs.push_back(std::move(x));
        } else {
            xs.push_back(embedding.matrix(config_.location_count, config_.embedding_dim).row(loc).transpose());
        }
    }
    return xs;
}

const std::vector<Vector>& FusionModel::one_hot_estimates(const std::vector<Index>& locations) const {
    std::lock_guard lock(estimates_.mutex);
    auto it = estimates_.entries.find(locations);
    if (it == estimates_.entries.end()) {
        const auto xs = location_inputs(locations);
        it = estimates_.entries.emplace(locations, ridge_trajectory(xs, config_.ridge_lambda, config_.ridge_sigma2))
                 .first;
    }
    return it->second;
}

FusionModel::LocationTrace FusionModel::location_forward(const std::vector<Index>& locations) const {
    LocationTrace t;
    t.locations = locations;
    t.inputs = location_inputs(locations);
    if (config_.location_encoding == LocationEncoding::one_hot)
        t.cell = gmrnn.forward(t.inputs, one_hot_estimates(locations));
    else
        t.cell = gmrnn.forward(t.inputs);
    return t;
}

void FusionModel::location_backward(const LocationTrace& t, const Vector& dloc) {
    const auto dxs = gmrnn.backward(t.cell, dloc);
    if (config_.location_encoding != LocationEncoding::embedding) return;
    auto grad = embedding.grad_matrix(config_.location_count, config_.embedding_dim);
    for (std::size_t k = 0; k < dxs.size(); ++k) grad.row(t.locations[k]) += dxs[k].transpose();
}

Vector FusionModel::location_vector(const std::vector<Index>& locations) const {
    return location_forward(locations).cell.hidden();
}

// Fusion head ----------------------------------------------------------------------

FusionModel::Trace FusionModel::forward(const Sample& sample, Mode mode, Rng* dropout_rng) const {
    Trace t;
    t.mode = mode;
    if (uses_image(mode) && !sample.image) throw InputError(to_string(mode) + " mode requires an image");
    if (uses_location(mode) && sample.locations.empty()) throw InputError(to_string(mode) + " mode requires a location");

    Vector img = Vector::Zero(config_.image_dim);
    Vector loc = Vector::Zero(config_.hidden);
    if (uses_image(mode)) {
        t.image = image_forward(*sample.image);
        img = t.image->image_vector;
    }
    if (uses_location(mode)) {
        t.location = location_forward(sample.locations);
        loc = t.location->cell.hidden();
    }
    t.fused = fuse(img, loc);

    Vector x = t.fused;
    for (std::size_t k = 0; k + 1 < head.size(); ++k) {
        t.head_inputs.push_back(x);
        t.head_pre.push_back(head[k].forward(x));
        x = relu(t.head_pre.back());
        if (dropout_rng && config_.dropout > 0.0) {
            t.dropout_masks.push_back(dropout_mask(x.size(), config_.dropout, *dropout_rng));
            x = x.cwiseProduct(t.dropout_masks.back());
        }
    }
    t.head_inputs.push_back(x);
    t.logits = head.back().forward(x);
    t.probabilities = softmax(t.logits);
    require_finite(t.probabilities, "model forward");
    return t;
}

double FusionModel::backward(const Trace& t, Index label) {
    if (label < 0 || label >= config_.num_classes()) throw InputError("label index out of range");
    Vector dlogits;
    const double loss = softmax_cross_entropy(t.logits, label, dlogits);
    Vector g = head.back().backward(t.head_inputs.back(), dlogits);
    for (std::size_t k = head.size() - 1; k-- > 0;) {
        if (!t.dropout_masks.empty()) g = g.cwiseProduct(t.dropout_masks[k]);
        g = (t.head_pre[k].array() > 0.0).select(g, 0.0);
        g = head[k].backward(t.head_inputs[k], g);
    }
    if (t.image) image_backward(*t.image, g.head(config_.image_dim));
    if (t.location) location_backward(*t.location, g.tail(config_.hidden));
    return loss;
}

Vector FusionModel::predict(const Sample& sample, std::optional<Mode> mode) const {
    return forward(sample, mode.value_or(config_.mode), nullptr).probabilities;
}

Index FusionModel::predict_label(const Sample& sample, std::optional<Mode> mode) const {
    Index best = 0;
    predict(sample, mode).maxCoeff(&best);
    return best;
}

}  // namespace wmc
