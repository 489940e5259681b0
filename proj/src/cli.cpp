#include "wmc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "wmc/gradient_suite.hpp"
#include "wmc/run_config.hpp"
#include "wmc/synthetic.hpp"
#include "wmc/train.hpp"

namespace wmc {
namespace {

namespace fs = std::filesystem;

enum class Verbosity { quiet = 0, info = 1, debug = 2 };

Verbosity verbosity_from_env() {
    const char* v = std::getenv("WMC_LOG");
    if (!v) return Verbosity::info;
    const std::string s(v);
    if (s == "quiet" || s == "error" || s == "0") return Verbosity::quiet;
    if (s == "debug" || s == "2") return Verbosity::debug;
    return Verbosity::info;
}

struct Logger {
    std::ostream& os;
    Verbosity level;
    void info(const std::string& msg) const {
        if (level >= Verbosity::info) os << "wmc: " << msg << "\n";
    }
    void debug(const std::string& msg) const {
        if (level >= Verbosity::debug) os << "wmc: " << msg << "\n";
    }
};

// Flag values as typed; applied on top of the --config file.
struct Flags {
    std::string config;
    std::string manifest, bodymap, classes, mode, batch, dropout, epochs, seed, out, checkpoint;
    std::string lr, split, augment, image_size;
    std::vector<std::string> overrides;  // --set key=value
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key = value config file");
    cmd->add_option("--manifest", f.manifest, "CSV manifest: image_path,label,raw_location_id");
    cmd->add_option("--bodymap", f.bodymap, "CSV raw_id,simplified_id body map");
    cmd->add_option("--classes", f.classes, "comma-separated class set, e.g. D,P,S,V");
    cmd->add_option("--mode", f.mode, "image_only | location_only | multimodal");
    cmd->add_option("--seed", f.seed, "seed for init, split, shuffling and dropout");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--image-size", f.image_size, "square input size in pixels");
    cmd->add_option("--set", f.overrides, "extra config key=value (repeatable)");
}

void add_training(CLI::App* cmd, Flags& f, bool lists) {
    cmd->add_option("--batch", f.batch, lists ? "batch sizes, comma-separated" : "mini-batch size");
    cmd->add_option("--dropout", f.dropout, lists ? "dropout rates, comma-separated" : "head dropout rate");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--split", f.split, "train fraction in (0, 1]");
    cmd->add_option("--augment", f.augment, "augmented copies per training image");
}

RunConfig resolve(const Flags& f, bool grid) {
    RunConfig rc;
    if (!f.config.empty()) rc.apply_file(f.config);
    const std::pair<const char*, const std::string*> direct[] = {
        {"manifest", &f.manifest}, {"bodymap", &f.bodymap}, {"classes", &f.classes},
        {"mode", &f.mode},         {"epochs", &f.epochs},   {"seed", &f.seed},
        {"out", &f.out},           {"checkpoint", &f.checkpoint}, {"lr", &f.lr},
        {"split", &f.split},       {"augment", &f.augment}, {"image_size", &f.image_size}};
    for (const auto& [key, value] : direct)
        if (!value->empty()) rc.set(key, *value);
    if (!grid) {
        if (!f.batch.empty()) rc.set("batch", f.batch);
        if (!f.dropout.empty()) rc.set("dropout", f.dropout);
    }
    for (const auto& kv : f.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return rc;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(item);
    return out;
}

BodyMap body_map_for(const RunConfig& rc) {
    if (rc.bodymap) return BodyMap::load(*rc.bodymap, rc.bodymap_raw, rc.bodymap_simplified);
    return BodyMap::identity(rc.bodymap_raw);
}

fs::path require_path(const std::optional<fs::path>& p, const char* flag) {
    if (!p) throw ConfigError(std::string("missing required ") + flag);
    return *p;
}

std::vector<Example> load_dataset(const RunConfig& rc, const BodyMap& map, bool require_every_class) {
    const fs::path manifest = require_path(rc.manifest, "--manifest");
    const auto records = load_manifest(manifest);
    DatasetOptions opts;
    opts.classes = rc.model.classes;
    opts.image_size = rc.model.extractor.image_size;
    opts.load_images = uses_image(rc.model.mode);
    opts.body_map = &map;
    opts.base_dir = manifest.parent_path();
    opts.require_every_class = require_every_class;
    return build_examples(records, opts);
}

std::pair<std::vector<Example>, std::vector<Example>> split_dataset(const std::vector<Example>& all,
                                                                    const FusionModelConfig& cfg) {
    const auto [tr, te] = split_indices(all.size(), cfg.train_fraction, cfg.seed);
    std::vector<Example> train_set, test_set;
    for (auto k : tr) train_set.push_back(all[k]);
    for (auto k : te) test_set.push_back(all[k]);
    return {with_augmentations(train_set, cfg.augment_copies, Rng::derive(cfg.seed, 3).state()),
            std::move(test_set)};
}

fs::path output_dir(const RunConfig& rc, const char* fallback) {
    const fs::path dir = rc.out ? *rc.out : fs::path(fallback);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IngestError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::string seconds(double s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << s;
    return os.str();
}

// The body map stored next to a checkpoint, unless one was given explicitly.
BodyMap checkpoint_body_map(const RunConfig& rc, const fs::path& checkpoint) {
    if (rc.bodymap) return body_map_for(rc);
    const fs::path beside = checkpoint.parent_path() / "bodymap.csv";
    if (fs::exists(beside)) return BodyMap::load(beside, rc.bodymap_raw, rc.bodymap_simplified);
    return BodyMap::identity(rc.bodymap_raw);
}

void require_location_count(const BodyMap& map, const FusionModelConfig& cfg) {
    if (map.simplified_count() != cfg.location_count)
        throw ConfigError("body map has " + std::to_string(map.simplified_count()) +
                          " simplified regions but the checkpoint expects " + std::to_string(cfg.location_count));
}

int cmd_ingest(const Flags& f, std::ostream& out, const Logger& log) {
    RunConfig rc = resolve(f, false);
    const BodyMap map = body_map_for(rc);
    const fs::path manifest = require_path(rc.manifest, "--manifest");
    const auto records = load_manifest(manifest);
    DatasetOptions opts;
    opts.classes = rc.model.classes;
    opts.image_size = rc.model.extractor.image_size;
    opts.body_map = &map;
    opts.base_dir = manifest.parent_path();
    opts.require_every_class = false;
    const auto examples = build_examples(records, opts);

    std::map<std::string, std::size_t> per_class;
    for (const auto& r : records) ++per_class[r.label];
    if (rc.out) {
        const fs::path dir = output_dir(rc, "");
        fs::create_directories(dir / "images");
        std::vector<ManifestRecord> written;
        for (std::size_t n = 0; n < examples.size(); ++n) {
            char name[32];
            std::snprintf(name, sizeof name, "%05zu.wimg", n);
            const fs::path rel = fs::path("images") / name;
            write_raster(dir / rel, *examples[n].input.image);
            written.push_back({rel.generic_string(), records[n].label, records[n].raw_location_id});
        }
        write_manifest(dir / "manifest.csv", written);
        write_file(dir / "bodymap.csv", map.to_csv());
        log.info("wrote " + std::to_string(written.size()) + " rasters to " + dir.string());
    }
    out << "records " << records.size() << "\n";
    for (const auto& c : rc.model.classes) out << "class " << c << " " << per_class[c] << "\n";
    out << "simplified_locations " << map.simplified_count() << "\n";
    return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out, const Logger& log) {
    RunConfig rc = resolve(f, false);
    const BodyMap map = body_map_for(rc);
    rc.model.location_count = map.simplified_count();
    rc.model.validate();
    const auto all = load_dataset(rc, map, true);
    const auto [train_set, test_set] = split_dataset(all, rc.model);
    const fs::path dir = output_dir(rc, "wmc-run");
    log.info("training " + to_string(rc.model.mode) + " on " + std::to_string(train_set.size()) + " examples, testing on " +
             std::to_string(test_set.size()));

    FusionModel model(rc.model);
    const int every = log.level >= Verbosity::debug ? 1 : std::max(1, rc.model.epochs / 10);
    const auto report = train(model, train_set, test_set, [&](const EpochStats& e) {
        if (e.epoch % every == 0 || e.epoch == rc.model.epochs)
            log.info("epoch " + std::to_string(e.epoch) + " loss " + format_metric(e.loss) + " acc " +
                     format_metric(e.accuracy));
    });

    save_model(dir / "checkpoint.wmck", model, report.rng_state);
    write_file(dir / "bodymap.csv", map.to_csv());
    write_file(dir / "epochs.csv", report.epochs_csv());
    write_file(dir / "metrics.json", dump(report.to_json()));
    write_file(dir / "run.cfg", rc.to_text());
    write_file(dir / "train.log", "wall_seconds " + seconds(report.wall_seconds) + "\n");
    log.info("finished in " + seconds(report.wall_seconds) + " s");

    const auto& h = report.headline();
    out << (report.test_metrics ? "test" : "train") << " accuracy " << format_metric(h.accuracy) << " macro_f1 "
        << format_metric(h.macro.f1) << "\n";
    out << "artifacts " << dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out, const Logger& log) {
    RunConfig rc = resolve(f, false);
    const fs::path ckpt = require_path(rc.checkpoint, "--checkpoint");
    auto loaded = load_model(ckpt);
    const auto& cfg = loaded.model->config();
    if (!f.classes.empty() && rc.model.classes != cfg.classes) {
        std::string have;
        for (const auto& c : cfg.classes) have += (have.empty() ? "" : ",") + c;
        throw ConfigError("class set " + f.classes + " does not match the checkpoint's " + have);
    }
    const Mode mode = f.mode.empty() ? cfg.mode : rc.model.mode;
    const BodyMap map = checkpoint_body_map(rc, ckpt);
    require_location_count(map, cfg);

    RunConfig data = rc;
    data.model.classes = cfg.classes;
    data.model.mode = mode;
    data.model.extractor.image_size = cfg.extractor.image_size;
    const auto examples = load_dataset(data, map, false);
    log.info("evaluating " + std::to_string(examples.size()) + " examples in " + to_string(mode) + " mode");
    const auto report = evaluate(*loaded.model, examples, mode);
    const std::string json = dump(report.to_json());
    if (rc.out) write_file(output_dir(rc, "") / "metrics.json", json);
    out << json;
    return kExitOk;
}

int cmd_predict(const Flags& f, const std::string& image, const std::vector<int>& locations, std::ostream& out,
                const Logger& log) {
    RunConfig rc = resolve(f, false);
    const fs::path ckpt = require_path(rc.checkpoint, "--checkpoint");
    auto loaded = load_model(ckpt);
    const auto& cfg = loaded.model->config();
    const Mode mode = f.mode.empty() ? cfg.mode : rc.model.mode;
    const BodyMap map = checkpoint_body_map(rc, ckpt);
    require_location_count(map, cfg);

    Sample s;
    if (!image.empty()) s.image = ingest_image(image, cfg.extractor.image_size);
    for (int raw : locations) s.locations.push_back(map.encode(raw));
    if (uses_image(mode) && !s.image) throw ConfigError(to_string(mode) + " prediction needs --image");
    if (uses_location(mode) && s.locations.empty()) throw ConfigError(to_string(mode) + " prediction needs --location");
    log.debug("predicting in " + to_string(mode) + " mode");

    const Vector p = loaded.model->predict(s, mode);
    Index best = 0;
    p.maxCoeff(&best);
    nlohmann::ordered_json j;
    j["label"] = cfg.classes[std::size_t(best)];
    for (std::size_t k = 0; k < cfg.classes.size(); ++k) j["probabilities"][cfg.classes[k]] = p[Index(k)];
    out << dump(j);
    return kExitOk;
}

int cmd_gradcheck(const std::string& scope, std::ostream& out, const Logger& log) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = run_gradient_suite(scope);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<std::string> failed;
    out << "module,layer,max_relative_error,worst_parameter,entries,status\n";
    for (const auto& r : rows) {
        char err[32];
        std::snprintf(err, sizeof err, "%.3e", r.max_relative_error);
        out << r.module << "," << r.layer << "," << err << "," << r.worst_parameter << "," << r.entries << ","
            << (r.passed ? "ok" : "FAIL") << "\n";
        log.debug(r.module + "/" + r.layer + " " + seconds(r.seconds) + " s");
        if (!r.passed) failed.push_back(r.module + "/" + r.layer);
    }
    log.info("gradient suite took " + seconds(total) + " s");
    if (!failed.empty()) {
        std::string msg = "gradient check exceeded tolerance in";
        for (const auto& l : failed) msg += " " + l;
        throw NumericError(msg);
    }
    return kExitOk;
}

int cmd_sweep(const Flags& f, std::ostream& out, const Logger& log) {
    RunConfig rc = resolve(f, true);
    const BodyMap map = body_map_for(rc);
    rc.model.location_count = map.simplified_count();

    std::vector<Index> batches = kDefaultSweepBatches;
    std::vector<double> dropouts = kDefaultSweepDropouts;
    if (!f.batch.empty()) {
        batches.clear();
        for (const auto& b : split_list(f.batch)) {
            RunConfig probe;
            probe.set("batch", b);
            batches.push_back(probe.model.batch_size);
        }
    }
    if (!f.dropout.empty()) {
        dropouts.clear();
        for (const auto& d : split_list(f.dropout)) {
            RunConfig probe;
            probe.set("dropout", d);
            dropouts.push_back(probe.model.dropout);
        }
    }
    if (batches.empty() || dropouts.empty()) throw ConfigError("sweep grid is empty");
    rc.model.validate();

    const auto all = load_dataset(rc, map, true);
    const auto [train_set, test_set] = split_dataset(all, rc.model);
    const fs::path dir = output_dir(rc, "wmc-sweep");
    log.info("sweeping " + std::to_string(batches.size() * dropouts.size()) + " cells");
    const auto report = sweep(rc.model, train_set, test_set, batches, dropouts);

    write_file(dir / "sweep.csv", report.csv());
    write_file(dir / "sweep_runtime.csv", report.runtime_csv());
    for (const auto& c : report.cells)
        if (!c.ok) log.info("cell batch=" + std::to_string(c.batch_size) + " dropout=" + format_metric(c.dropout) +
                            " failed: " + c.error);
    out << report.csv();
    if (report.succeeded() == 0) throw IngestError("every sweep cell failed");
    return kExitOk;
}

int cmd_synth(const std::string& dir, std::size_t samples, std::uint64_t seed, Index image_size,
              const std::string& classes, std::ostream& out) {
    SyntheticOptions opts;
    opts.samples = samples;
    opts.seed = seed;
    opts.image_size = image_size;
    if (!classes.empty()) opts.classes = parse_class_set(classes);
    const auto manifest = write_synthetic_dataset(dir, opts);
    out << manifest.string() << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log_stream) {
    const Logger log{log_stream, verbosity_from_env()};

    CLI::App app{"Wound classification from images and body-map locations", "wmc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "wmc 0.1.0");
    Flags f;

    auto* ingest = app.add_subcommand("ingest", "validate a manifest and body map; optionally write rasters");
    add_common(ingest, f);

    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint and reports");
    add_common(train_cmd, f);
    add_training(train_cmd, f, false);

    auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
    add_common(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();

    std::string image;
    std::vector<int> locations;
    auto* predict = app.add_subcommand("predict", "classify one image and/or location");
    add_common(predict, f);
    predict->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
    predict->add_option("--image", image, "image file (raster, JPEG or PNG)");
    predict->add_option("--location", locations, "raw body-map location ID (repeatable for a sequence)");

    std::string scope = "all";
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("scope", scope, "all or one module name");

    auto* sweep_cmd = app.add_subcommand("sweep", "batch size x dropout grid");
    add_common(sweep_cmd, f);
    add_training(sweep_cmd, f, true);

    std::string synth_dir;
    std::size_t synth_samples = 64;
    std::uint64_t synth_seed = 7;
    Index synth_size = 32;
    std::string synth_classes;
    auto* synth = app.add_subcommand("synth", "write the synthetic multimodal dataset");
    synth->add_option("--out", synth_dir, "output directory")->required();
    synth->add_option("--samples", synth_samples, "sample count")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--image-size", synth_size, "image size")->check(CLI::Range(Index(4), Index(4096)));
    synth->add_option("--classes", synth_classes, "class set");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, err;
        const int code = app.exit(e, o, err);
        out << o.str();
        log_stream << err.str();
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*ingest) return cmd_ingest(f, out, log);
        if (*train_cmd) return cmd_train(f, out, log);
        if (*eval) return cmd_eval(f, out, log);
        if (*predict) return cmd_predict(f, image, locations, out, log);
        if (*gradcheck) return cmd_gradcheck(scope, out, log);
        if (*sweep_cmd) return cmd_sweep(f, out, log);
        if (*synth) return cmd_synth(synth_dir, synth_samples, synth_seed, synth_size, synth_classes, out);
    } catch (const ConfigError& e) {
        log_stream << "wmc: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        log_stream << "wmc: numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        log_stream << "wmc: data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}

}  // namespace wmc
