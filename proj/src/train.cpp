#include "wmc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace wmc {

std::vector<Example> build_examples(const std::vector<ManifestRecord>& records, const DatasetOptions& options) {
    if (records.empty()) throw IngestError("manifest has no records");
    const BodyMap identity = BodyMap::identity();
    const BodyMap& map = options.body_map ? *options.body_map : identity;

    std::vector<Example> out;
    std::vector<std::string> problems;
    std::set<std::string> seen_classes;
    for (std::size_t n = 0; n < records.size(); ++n) {
        const auto& r = records[n];
        const std::string where = "record " + std::to_string(n + 1) + " (" + r.image_path + "): ";
        const auto it = std::find(options.classes.begin(), options.classes.end(), r.label);
        if (it == options.classes.end()) {
            problems.push_back(where + "label '" + r.label + "' is not in the class set");
            continue;
        }
        Example ex;
        ex.label = Index(it - options.classes.begin());
        ex.source = r.image_path;
        try {
            ex.input.locations = {map.encode(r.raw_location_id)};
        } catch (const IngestError& e) {
            problems.push_back(where + e.what());
            continue;
        }
        if (options.load_images) {
            std::filesystem::path p(r.image_path);
            if (p.is_relative() && !options.base_dir.empty()) p = options.base_dir / p;
            try {
                ex.input.image = ingest_image(p, options.image_size);
            } catch (const std::exception& e) {
                problems.push_back(where + e.what());
                continue;
            }
        }
        seen_classes.insert(r.label);
        out.push_back(std::move(ex));
    }
    if (options.require_every_class)
        for (const auto& c : options.classes)
            if (!seen_classes.count(c)) problems.push_back("class '" + c + "' has no usable records");
    if (!problems.empty()) {
        std::string msg = "dataset ingestion failed for " + std::to_string(problems.size()) + " item(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw IngestError(msg);
    }
    return out;
}

std::vector<Example> with_augmentations(const std::vector<Example>& examples, int copies, std::uint64_t seed) {
    std::vector<Example> out = examples;
    const AugmentPolicy policy;
    for (int c = 0; c < copies; ++c)
        for (std::size_t n = 0; n < examples.size(); ++n) {
            if (!examples[n].input.image) continue;
            Example ex = examples[n];
            ex.input.image = augment(*ex.input.image, policy, seed, std::uint64_t(c) * examples.size() + n);
            out.push_back(std::move(ex));
        }
    return out;
}

nlohmann::ordered_json TrainingReport::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["mode"] = to_string(config.mode);
    j["classes"] = config.classes;
    j["train_size"] = train_size;
    j["test_size"] = test_size;
    j["train_fraction"] = config.train_fraction;
    j["epochs_run"] = epochs.size();
    j["final_loss"] = epochs.empty() ? 0.0 : epochs.back().loss;
    j["train"] = train_metrics.to_json();
    j["test"] = test_metrics ? test_metrics->to_json() : nlohmann::ordered_json();
    j["config"] = config.to_json();
    return j;
}

std::string TrainingReport::epochs_csv() const {
    std::string out = "epoch,loss,accuracy\n";
    for (const auto& e : epochs)
        out += std::to_string(e.epoch) + "," + format_metric(e.loss) + "," + format_metric(e.accuracy) + "\n";
    return out;
}

MetricsReport evaluate(const FusionModel& model, const std::vector<Example>& examples, std::optional<Mode> mode) {
    ConfusionMatrix cm(model.config().classes);
    for (const auto& ex : examples) cm.add(std::size_t(ex.label), std::size_t(model.predict_label(ex.input, mode)));
    return score(cm);
}

double mean_loss(const FusionModel& model, const std::vector<Example>& examples) {
    double total = 0.0;
    for (const auto& ex : examples) {
        const Vector p = model.predict(ex.input);
        total += -std::log(std::max(p[ex.label], 1e-300));
    }
    return examples.empty() ? 0.0 : total / double(examples.size());
}

TrainingReport train(FusionModel& model, const std::vector<Example>& train_set, const std::vector<Example>& test_set,
                     const EpochCallback& on_epoch) {
    const auto started = std::chrono::steady_clock::now();
    const FusionModelConfig& cfg = model.config();
    if (train_set.empty()) throw IngestError("training set is empty");
    for (const auto& ex : train_set)
        if (ex.label < 0 || ex.label >= cfg.num_classes()) throw IngestError("label outside class set: " + ex.source);

    Rng order_rng = Rng::derive(cfg.seed, 1);
    Rng dropout_rng = Rng::derive(cfg.seed, 2);
    Optimizer optimizer(cfg.optimizer, cfg.learning_rate, model.parameters());

    TrainingReport report;
    report.config = cfg;
    report.train_size = train_set.size();
    report.test_size = test_set.size();

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            optimizer.zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const Example& ex = train_set[order[k]];
                const auto trace = model.forward(ex.input, cfg.mode, &dropout_rng);
                const double loss = model.backward(trace, ex.label);
                if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
                loss_sum += loss;
                Index predicted = 0;
                trace.probabilities.maxCoeff(&predicted);
                correct += predicted == ex.label;
            }
            optimizer.step(1.0 / double(end - start));
        }
        EpochStats stats{epoch, loss_sum / double(order.size()), double(correct) / double(order.size())};
        report.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    for (const Parameter* p : model.parameters())
        if (!p->value.all_finite()) throw NumericError("parameter " + p->name + " became non-finite");

    report.train_metrics = evaluate(model, train_set);
    if (!test_set.empty()) report.test_metrics = evaluate(model, test_set);
    report.rng_state = dropout_rng.state();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// Sweep ------------------------------------------------------------------------------

SweepReport sweep(const FusionModelConfig& base, const std::vector<Example>& train_set,
                  const std::vector<Example>& test_set, const std::vector<Index>& batches,
                  const std::vector<double>& dropouts) {
    if (batches.empty() || dropouts.empty()) throw ConfigError("sweep grid is empty");
    SweepReport report;
    for (Index batch : batches)
        for (double dropout : dropouts) {
            SweepCell cell;
            cell.batch_size = batch;
            cell.dropout = dropout;
            const auto started = std::chrono::steady_clock::now();
            try {
                FusionModelConfig cfg = base;
                cfg.batch_size = batch;
                cfg.dropout = dropout;
                FusionModel model(cfg);
                const TrainingReport r = train(model, train_set, test_set);
                cell.metrics = r.headline();
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            cell.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            report.cells.push_back(std::move(cell));
        }
    return report;
}

namespace {

std::string csv_escape(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string SweepReport::csv() const {
    std::string out = "batch,dropout,status," + MetricsReport::csv_header() + ",error\n";
    for (const auto& c : cells) {
        out += std::to_string(c.batch_size) + "," + format_metric(c.dropout) + ",";
        if (c.ok)
            out += "ok," + c.metrics->csv_row() + ",\n";
        else
            out += "failed,,,,,,," + csv_escape(c.error) + "\n";
    }
    return out;
}

std::string SweepReport::runtime_csv() const {
    std::string out = "batch,dropout,runtime_seconds\n";
    for (const auto& c : cells)
        out += std::to_string(c.batch_size) + "," + format_metric(c.dropout) + "," + format_metric(c.runtime_seconds) +
               "\n";
    return out;
}

const SweepCell* SweepReport::best() const {
    const SweepCell* best = nullptr;
    for (const auto& c : cells)
        if (c.ok && (!best || c.metrics->accuracy > best->metrics->accuracy)) best = &c;
    return best;
}

std::size_t SweepReport::succeeded() const {
    return std::size_t(std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return c.ok; }));
}

}  // namespace wmc
