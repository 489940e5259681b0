#include <gtest/gtest.h>

#include "synthetic_fixture.hpp"
#include "test_util.hpp"
#include "wmc/gradient_suite.hpp"

using namespace wmc;

namespace {

Sample tiny_sample(Rng& rng, const FusionModelConfig& cfg) {
    Sample s;
    s.image = testutil::random_tensor({3, cfg.extractor.image_size, cfg.extractor.image_size}, rng, 0, 1);
    s.locations = {Index(rng.below(std::uint64_t(cfg.location_count)))};
    return s;
}

std::vector<Example> tiny_examples(const FusionModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Example> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back({tiny_sample(rng, cfg), Index(k % cfg.classes.size()), ""});
    return out;
}

}  // namespace

TEST(Fuse, Concatenation) {
    EXPECT_EQ(fuse(Vector{{1.0, 2.0}}, Vector{{3.0}}), (Vector{{1.0, 2.0, 3.0}}));
    EXPECT_EQ(fuse(Vector::Zero(2), Vector::Zero(3)), Vector::Zero(5));
    EXPECT_EQ(FusionModelConfig{}.fused_dim(), 192);
}

TEST(Config, ValidationAndJson) {
    FusionModelConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    const auto back = FusionModelConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
    EXPECT_EQ(back.to_json().dump(), cfg.to_json().dump());
    cfg.dropout = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.classes = {"D", "X"};
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(parse_mode("both"), ConfigError);
    EXPECT_EQ(parse_mode("location_only"), Mode::location_only);
}

TEST(FusionModel, ProbabilitiesAreDistributions) {
    const auto cfg = testutil::tiny_config();
    FusionModel model(cfg);
    Rng rng(60);
    for (int k = 0; k < 20; ++k) {
        const Sample s = tiny_sample(rng, cfg);
        for (Mode m : {Mode::image_only, Mode::location_only, Mode::multimodal}) {
            const Vector p = model.predict(s, m);
            EXPECT_EQ(p.size(), 4);
            EXPECT_GE(p.minCoeff(), 0.0);
            EXPECT_NEAR(p.sum(), 1.0, 1e-12);
        }
    }
}

TEST(FusionModel, MissingModalityIsInputError) {
    const auto cfg = testutil::tiny_config();
    FusionModel model(cfg);
    Rng rng(61);
    Sample s = tiny_sample(rng, cfg);
    Sample no_image = s;
    no_image.image.reset();
    Sample no_location = s;
    no_location.locations.clear();
    EXPECT_THROW(model.predict(no_image, Mode::multimodal), InputError);
    EXPECT_THROW(model.predict(no_location, Mode::location_only), InputError);
    EXPECT_NO_THROW(model.predict(no_image, Mode::location_only));
    EXPECT_NO_THROW(model.predict(no_location, Mode::image_only));
    Sample far = s;
    far.locations = {cfg.location_count};
    EXPECT_THROW(model.predict(far, Mode::multimodal), InputError);
}

TEST(FusionModel, EvaluationIsDeterministicAndDropoutFree) {
    const auto cfg = testutil::tiny_config();
    FusionModel model(cfg);
    Rng rng(62);
    const Sample s = tiny_sample(rng, cfg);
    const Vector p = model.predict(s);
    EXPECT_EQ(model.forward(s, cfg.mode, nullptr).probabilities, p);
    EXPECT_EQ(model.predict(s), p);
    Rng drop(1);
    const auto t = model.forward(s, cfg.mode, &drop);
    EXPECT_FALSE(t.dropout_masks.empty());
}

TEST(FusionModel, SameSeedSameWeights) {
    const auto cfg = testutil::tiny_config();
    FusionModel a(cfg), b(cfg);
    const auto ta = a.named_tensors(), tb = b.named_tensors();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t k = 0; k < ta.size(); ++k) EXPECT_EQ(ta[k].value, tb[k].value) << ta[k].name;
    auto other = cfg;
    other.seed = cfg.seed + 1;
    EXPECT_NE(FusionModel(other).named_tensors()[0].value, ta[0].value);
}

TEST(FusionModel, EmbeddingEncodingHasItsOwnTable) {
    auto cfg = testutil::tiny_config();
    cfg.location_encoding = LocationEncoding::embedding;
    FusionModel model(cfg);
    bool found = false;
    for (const auto& t : model.named_tensors()) found = found || t.name == "location.embedding";
    EXPECT_TRUE(found);
    Rng rng(63);
    EXPECT_NEAR(model.predict(tiny_sample(rng, cfg)).sum(), 1.0, 1e-12);
}

TEST(Checkpoint, ModelRoundTripBitExact) {
    const auto cfg = testutil::tiny_config();
    FusionModel model(cfg);
    const auto examples = tiny_examples(cfg, 8, 64);
    train(model, examples);
    const auto dir = testutil::scratch_dir("model_ckpt");
    save_model(dir / "m.wmck", model, 1234);
    const auto loaded = load_model(dir / "m.wmck");
    EXPECT_EQ(loaded.rng_state, 1234u);
    const auto a = model.named_tensors(), b = loaded.model->named_tensors();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].name, b[k].name);
        EXPECT_EQ(a[k].value, b[k].value);
    }
    EXPECT_EQ(loaded.model->config().to_json().dump(), cfg.to_json().dump());
    EXPECT_EQ(loaded.model->predict(examples[0].input), model.predict(examples[0].input));

    auto tensors = model.named_tensors();
    tensors.pop_back();
    EXPECT_THROW(model.load_tensors(tensors), FormatError);
    tensors = model.named_tensors();
    tensors[0].value = Tensor({1});
    EXPECT_THROW(model.load_tensors(tensors), FormatError);
}

TEST(Training, DeterministicGivenSeed) {
    const auto cfg = testutil::tiny_config();
    const auto data = tiny_examples(cfg, 12, 65);
    FusionModel a(cfg), b(cfg);
    const auto ra = train(a, data, data), rb = train(b, data, data);
    EXPECT_EQ(ra.to_json().dump(), rb.to_json().dump());
    EXPECT_EQ(ra.epochs_csv(), rb.epochs_csv());
    EXPECT_EQ(encode_checkpoint(a.named_tensors()), encode_checkpoint(b.named_tensors()));
}

TEST(Training, DropoutRateChangesReportedLoss) {
    auto cfg = testutil::synthetic_config();
    cfg.epochs = 2;
    const auto data = testutil::synthetic_examples();
    cfg.dropout = 0.5;
    FusionModel a(cfg);
    const auto ra = train(a, data);
    cfg.dropout = 0.9;
    FusionModel b(cfg);
    const auto rb = train(b, data);
    EXPECT_NE(ra.epochs.back().loss, rb.epochs.back().loss);
}

TEST(Training, FirstStepDescends) {
    const auto data = testutil::synthetic_examples();
    const std::vector<Example> batch(data.begin(), data.begin() + 16);
    int descended = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto cfg = testutil::synthetic_config();
        cfg.seed = seed;
        cfg.learning_rate = 1e-3;
        FusionModel model(cfg);
        const double before = mean_loss(model, batch);
        Optimizer opt(cfg.optimizer, cfg.learning_rate, model.parameters());
        opt.zero_grad();
        for (const auto& ex : batch) model.backward(model.forward(ex.input, cfg.mode, nullptr), ex.label);
        opt.step(1.0 / double(batch.size()));
        descended += mean_loss(model, batch) < before;
    }
    EXPECT_GE(descended, 9);
}

TEST(Training, NonFiniteLossIsNumericError) {
    auto cfg = testutil::tiny_config();
    cfg.learning_rate = 1e300;
    cfg.optimizer = OptimizerKind::sgd;
    cfg.epochs = 5;
    FusionModel model(cfg);
    EXPECT_THROW(train(model, tiny_examples(cfg, 8, 66)), NumericError);
}

TEST(Dataset, BuildExamplesReportsAllProblems) {
    const auto dir = testutil::scratch_dir("dataset");
    SyntheticOptions so;
    so.samples = 8;
    write_synthetic_dataset(dir, so);
    auto records = load_manifest(dir / "manifest.csv");
    const BodyMap map = BodyMap::load(dir / "bodymap.csv");
    DatasetOptions opts;
    opts.classes = so.classes;
    opts.image_size = 32;
    opts.body_map = &map;
    opts.base_dir = dir;
    EXPECT_EQ(build_examples(records, opts).size(), 8u);

    records[1].image_path = "images/nope.wimg";
    records[2].label = "BG";
    try {
        build_examples(records, opts);
        FAIL();
    } catch (const IngestError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("nope.wimg"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'BG'"), std::string::npos) << msg;
    }
    EXPECT_THROW(build_examples({}, opts), IngestError);
    opts.classes = {"D", "P", "S", "V", "N"};
    EXPECT_THROW(build_examples(load_manifest(dir / "manifest.csv"), opts), IngestError);
}

TEST(Dataset, AugmentationKeepsLabelsAndLocations) {
    const auto data = testutil::synthetic_examples();
    const auto aug = with_augmentations(data, 2, 9);
    ASSERT_EQ(aug.size(), 3 * data.size());
    for (std::size_t k = 0; k < aug.size(); ++k) {
        const auto& src = data[k % data.size()];
        EXPECT_EQ(aug[k].label, src.label);
        EXPECT_EQ(aug[k].input.locations, src.input.locations);
        EXPECT_EQ(aug[k].input.image->shape(), src.input.image->shape());
    }
}

TEST(Sweep, GridShapeAndSingleCellConsistency) {
    const auto cfg = testutil::tiny_config();
    const auto data = tiny_examples(cfg, 8, 67);
    const auto grid = sweep(cfg, data, data, {2, 4}, {0.5, 0.6, 0.7});
    EXPECT_EQ(grid.cells.size(), 6u);
    EXPECT_EQ(grid.succeeded(), 6u);
    EXPECT_NE(grid.best(), nullptr);
    std::size_t lines = 0;
    for (char c : grid.csv()) lines += c == '\n';
    EXPECT_EQ(lines, 7u);

    const auto one = sweep(cfg, data, data, {cfg.batch_size}, {cfg.dropout});
    ASSERT_EQ(one.cells.size(), 1u);
    FusionModel direct(cfg);
    const auto r = train(direct, data, data);
    EXPECT_EQ(one.cells[0].metrics->to_json().dump(), r.headline().to_json().dump());

    const auto failing = sweep(cfg, {}, {}, {4}, {0.5});
    EXPECT_EQ(failing.succeeded(), 0u);
    EXPECT_FALSE(failing.cells[0].error.empty());
}

TEST(Gradcheck, FusionHeadSuite) {
    for (const auto& row : run_gradient_suite("fusion_head")) EXPECT_TRUE(row.passed) << row.layer << " " << row.max_relative_error;
}
