#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmc/data_io.hpp"
#include "wmc/metrics.hpp"
#include "wmc/model.hpp"

namespace wmc {

/// One labelled sample ready for the model.
struct Example {
    Sample input;
    Index label = 0;
    std::string source;  // manifest image path, for diagnostics
};

struct DatasetOptions {
    std::vector<std::string> classes;
    Index image_size = 224;
    bool load_images = true;
    /// Locations are simplified and densely indexed through this map.
    const BodyMap* body_map = nullptr;
    /// Relative image paths resolve against this directory.
    std::filesystem::path base_dir;
    /// Fail when a class of `classes` has no record.
    bool require_every_class = true;
};

/// Validates records against the class set and loads their images. All
/// problems are reported together in one IngestError.
std::vector<Example> build_examples(const std::vector<ManifestRecord>& records, const DatasetOptions& options);

/// Appends `copies` seeded augmentations of each image example.
std::vector<Example> with_augmentations(const std::vector<Example>& examples, int copies, std::uint64_t seed);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;      // mean training cross-entropy, dropout active
    double accuracy = 0.0;  // running training accuracy, dropout active
};

struct TrainingReport {
    FusionModelConfig config;
    std::vector<EpochStats> epochs;
    MetricsReport train_metrics;
    std::optional<MetricsReport> test_metrics;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::uint64_t rng_state = 0;
    double wall_seconds = 0.0;

    /// Deterministic content only; wall-clock time is reported separately.
    nlohmann::ordered_json to_json() const;
    std::string epochs_csv() const;
    /// Test metrics when a test split exists, otherwise train metrics.
    const MetricsReport& headline() const { return test_metrics ? *test_metrics : train_metrics; }
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch training of `model` with its own config (batch size, epochs,
/// dropout, optimizer). Gradients are averaged over each batch.
TrainingReport train(FusionModel& model, const std::vector<Example>& train_set,
                     const std::vector<Example>& test_set = {}, const EpochCallback& on_epoch = {});

/// Evaluation-mode predictions scored against labels.
MetricsReport evaluate(const FusionModel& model, const std::vector<Example>& examples,
                       std::optional<Mode> mode = std::nullopt);

/// Mean evaluation-mode cross-entropy.
double mean_loss(const FusionModel& model, const std::vector<Example>& examples);

struct SweepCell {
    Index batch_size = 0;
    double dropout = 0.0;
    bool ok = false;
    std::string error;
    std::optional<MetricsReport> metrics;
    double runtime_seconds = 0.0;
};

struct SweepReport {
    std::vector<SweepCell> cells;

    /// (batch, dropout, status, metrics...) rows; deterministic.
    std::string csv() const;
    /// (batch, dropout, runtime_seconds) rows.
    std::string runtime_csv() const;
    const SweepCell* best() const;
    std::size_t succeeded() const;
};

inline const std::vector<Index> kDefaultSweepBatches{4, 8, 16, 32, 64};
inline const std::vector<double> kDefaultSweepDropouts{0.5, 0.6, 0.7, 0.8, 0.9};

/// Trains one fresh model per (batch, dropout) cell. A failing cell is
/// recorded and the grid continues.
SweepReport sweep(const FusionModelConfig& base, const std::vector<Example>& train_set,
                  const std::vector<Example>& test_set, const std::vector<Index>& batches,
                  const std::vector<double>& dropouts);

// Model checkpoints: tensor table in `path` (WMCK layout) plus a JSON sidecar
// `path.json` holding the config echo and RNG state.
struct ModelCheckpoint {
    std::unique_ptr<FusionModel> model;
    std::uint64_t rng_state = 0;
};

void save_model(const std::filesystem::path& path, const FusionModel& model, std::uint64_t rng_state);
ModelCheckpoint load_model(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace wmc
