#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmc/attention.hpp"
#include "wmc/capsule.hpp"
#include "wmc/data_io.hpp"
#include "wmc/gmrnn.hpp"
#include "wmc/layers.hpp"
#include "wmc/sepconv.hpp"

namespace wmc {

enum class Mode { image_only, location_only, multimodal };
enum class LocationEncoding { one_hot, embedding };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);
std::string to_string(LocationEncoding enc);
LocationEncoding parse_location_encoding(const std::string& text);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

inline bool uses_image(Mode m) { return m != Mode::location_only; }
inline bool uses_location(Mode m) { return m != Mode::image_only; }

struct FusionModelConfig {
    std::vector<std::string> classes{"D", "P", "S", "V"};
    Mode mode = Mode::multimodal;

    FeatureExtractorConfig extractor;
    CapsuleConfig capsule;
    Index image_dim = 128;

    Index location_count = kSimplifiedLocationCount;
    LocationEncoding location_encoding = LocationEncoding::one_hot;
    Index embedding_dim = 64;
    Index hidden = 64;
    double ridge_lambda = 1.0;
    double ridge_sigma2 = 1.0;

    std::vector<Index> head{128, 64};
    double dropout = 0.5;

    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;
    Index batch_size = 16;
    int epochs = 50;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;
    int augment_copies = 0;

    Index num_classes() const { return Index(classes.size()); }
    Index fused_dim() const { return image_dim + hidden; }
    Index gmrnn_input_dim() const {
        return location_encoding == LocationEncoding::one_hot ? location_count : embedding_dim;
    }

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static FusionModelConfig from_json(const nlohmann::json& j);
};

/// Concatenation [img; loc].
Vector fuse(const Vector& image_vector, const Vector& location_vector);

/// Model input. Locations are dense body-map indices in [0, location_count);
/// the usual case is a single location.
struct Sample {
    std::optional<Tensor> image;
    std::vector<Index> locations;
};

/// Image_vector (+) Location_vector -> dense relu head -> softmax.
///
/// The head always sees the full fused width; a modality that a mode leaves
/// out contributes zeros, so one set of weights serves every mode.
class FusionModel {
public:
    struct ImageTrace {
        FeatureExtractor::Trace extractor;
        Vector primary_pre;
        CapsuleLayer::Trace capsule;
        ImageVectorLayer::Trace attention;
        Vector image_vector;
    };
    struct LocationTrace {
        std::vector<Index> locations;
        std::vector<Vector> inputs;
        GmrnnCell::Trace cell;
    };
    struct Trace {
        Mode mode = Mode::multimodal;
        std::optional<ImageTrace> image;
        std::optional<LocationTrace> location;
        Vector fused;
        std::vector<Vector> head_inputs;    // input of each head layer
        std::vector<Vector> head_pre;       // pre-activation of hidden layers
        std::vector<Vector> dropout_masks;  // empty in evaluation
        Vector logits;
        Vector probabilities;
    };

    explicit FusionModel(FusionModelConfig config);

    const FusionModelConfig& config() const { return config_; }

    /// Class probabilities in evaluation mode (dropout off).
    Vector predict(const Sample& sample, std::optional<Mode> mode = std::nullopt) const;
    Index predict_label(const Sample& sample, std::optional<Mode> mode = std::nullopt) const;

    /// `dropout_rng` non-null enables inverted dropout in the head.
    Trace forward(const Sample& sample, Mode mode, Rng* dropout_rng) const;
    /// Accumulates gradients of cross-entropy at `label`; returns the loss.
    double backward(const Trace& trace, Index label);

    Vector image_vector(const Tensor& image) const;
    Vector location_vector(const std::vector<Index>& locations) const;

    ParameterList parameters();
    std::vector<NamedTensor> named_tensors() const;
    /// Replaces every parameter value; names and shapes must match exactly.
    void load_tensors(const std::vector<NamedTensor>& tensors);

    // Components, exposed for testing and the gradient suite.
    FeatureExtractor extractor;
    Dense primary;
    CapsuleLayer capsule;
    ImageVectorLayer attention;
    Parameter embedding;  // [location_count x embedding_dim]; unused for one-hot
    GmrnnCell gmrnn;
    std::vector<Dense> head;

private:
    ImageTrace image_forward(const Tensor& image) const;
    void image_backward(const ImageTrace& trace, const Vector& dimage);
    LocationTrace location_forward(const std::vector<Index>& locations) const;
    void location_backward(const LocationTrace& trace, const Vector& dloc);
    std::vector<Vector> location_inputs(const std::vector<Index>& locations) const;
    const std::vector<Vector>& one_hot_estimates(const std::vector<Index>& locations) const;

    // Ridge estimates for one-hot sequences depend only on the sequence, so
    // they are computed once per distinct sequence.
    struct EstimateCache {
        std::mutex mutex;
        std::map<std::vector<Index>, std::vector<Vector>> entries;

        EstimateCache() = default;
        EstimateCache(const EstimateCache& other);
        EstimateCache& operator=(const EstimateCache& other);
    };

    FusionModelConfig config_;
    mutable EstimateCache estimates_;
};

}  // namespace wmc
