#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wmc/cli.hpp"
#include "wmc/data_io.hpp"
#include "wmc/run_config.hpp"
#include "wmc/synthetic.hpp"

using namespace wmc;

namespace {

struct Run {
    int code;
    std::string out, log;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, log;
    const int code = run_cli(args, out, log);
    return {code, out.str(), log.str()};
}

// Small synthetic dataset plus a config for a fast model.
std::filesystem::path dataset(const std::string& name) {
    const auto dir = testutil::scratch_dir(name);
    SyntheticOptions so;
    so.samples = 16;
    so.image_size = 8;
    write_synthetic_dataset(dir, so);
    write_file(dir / "fast.cfg",
               "# tiny model\n"
               "image_size = 8\n"
               "extractor_channels = 4,8\n"
               "input_capsules = 4\ninput_capsule_dim = 3\noutput_capsules = 3\noutput_capsule_dim = 4\n"
               "routing_iterations = 2\nimage_dim = 6\nhidden = 5\nhead = 7\n"
               "epochs = 2\nbatch = 4\n");
    return dir;
}

std::vector<std::string> data_args(const std::filesystem::path& dir) {
    return {"--config", (dir / "fast.cfg").string(), "--manifest", (dir / "manifest.csv").string(), "--bodymap",
            (dir / "bodymap.csv").string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST(RunConfig, ClosedSchema) {
    RunConfig rc;
    rc.apply_text("classes = N,D\nbatch = 8 # comment\n\nmode=location_only\n");
    EXPECT_EQ(rc.model.classes, (std::vector<std::string>{"N", "D"}));
    EXPECT_EQ(rc.model.batch_size, 8);
    EXPECT_EQ(rc.model.mode, Mode::location_only);
    try {
        rc.apply_text("batch = 4\nlearning_rate = 0.1\n", "x.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
    EXPECT_THROW(rc.set("batch", "0"), ConfigError);
    EXPECT_THROW(rc.set("dropout", "1.5"), ConfigError);
    EXPECT_THROW(rc.set("epochs", "ten"), ConfigError);
    EXPECT_THROW(rc.apply_text("no equals sign\n"), ConfigError);

    RunConfig again;
    again.apply_text(rc.to_text());
    EXPECT_EQ(again.to_text(), rc.to_text());
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, kExitConfig);
    EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
    EXPECT_EQ(run({"train", "--bogus"}).code, kExitConfig);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, GradcheckScopes) {
    const auto caps = run({"gradcheck", "capsule"});
    EXPECT_EQ(caps.code, kExitOk);
    std::istringstream lines(caps.out);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) EXPECT_EQ(line.rfind("capsule,", 0), 0u) << line;
    const auto bad = run({"gradcheck", "transformer"});
    EXPECT_EQ(bad.code, kExitConfig);
    EXPECT_NE(bad.log.find("transformer"), std::string::npos);
}

TEST(Cli, TrainEvalPredict) {
    const auto dir = dataset("cli_train");
    const auto out = dir / "run";
    const auto r = run(concat({"train"}, concat(data_args(dir), {"--out", out.string(), "--seed", "3"})));
    ASSERT_EQ(r.code, kExitOk) << r.log;
    for (const char* f : {"checkpoint.wmck", "checkpoint.wmck.json", "epochs.csv", "metrics.json", "train.log"})
        EXPECT_TRUE(std::filesystem::exists(out / f)) << f;

    const auto ckpt = (out / "checkpoint.wmck").string();
    const auto ev = run({"eval", "--checkpoint", ckpt, "--manifest", (dir / "manifest.csv").string(), "--classes",
                         "D,P,S,V"});
    EXPECT_EQ(ev.code, kExitOk) << ev.log;
    EXPECT_EQ(nlohmann::json::parse(ev.out)["samples"], 16);

    const auto mismatch =
        run({"eval", "--checkpoint", ckpt, "--manifest", (dir / "manifest.csv").string(), "--classes", "N,D"});
    EXPECT_EQ(mismatch.code, kExitConfig);

    write_file(dir / "empty.csv", "image_path,label,raw_location_id\n");
    EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--manifest", (dir / "empty.csv").string()}).code, kExitData);

    const auto pr = run({"predict", "--checkpoint", ckpt, "--image", (dir / "images/000.wimg").string(), "--location",
                         "436"});
    EXPECT_EQ(pr.code, kExitOk) << pr.log;
    EXPECT_EQ(nlohmann::json::parse(pr.out)["probabilities"].size(), 4u);
    EXPECT_EQ(run({"predict", "--checkpoint", ckpt, "--location", "436"}).code, kExitConfig);
    EXPECT_EQ(run({"predict", "--checkpoint", ckpt, "--mode", "location_only", "--location", "436"}).code, kExitOk);
}

TEST(Cli, TrainErrorsMapToExitCodes) {
    const auto dir = dataset("cli_errors");
    const auto base = concat({"train"}, data_args(dir));
    const auto unknown = run(concat(base, {"--classes", "D,X", "--out", (dir / "o").string()}));
    EXPECT_EQ(unknown.code, kExitConfig);
    EXPECT_NE(unknown.log.find("'X'"), std::string::npos);
    EXPECT_EQ(run(concat(base, {"--set", "colour=red"})).code, kExitConfig);
    write_file(dir / "empty.csv", "image_path,label,raw_location_id\n");
    EXPECT_EQ(run({"train", "--manifest", (dir / "empty.csv").string()}).code, kExitData);
    EXPECT_EQ(run({"train", "--manifest", (dir / "missing.csv").string()}).code, kExitData);
    EXPECT_EQ(run(concat(base, {"--lr", "1e300", "--set", "optimizer=sgd", "--out", (dir / "o").string()})).code,
              kExitNumeric);
}

TEST(Cli, LocationOnlyModeRuns) {
    const auto dir = dataset("cli_location");
    const auto r = run(concat({"train"}, concat(data_args(dir), {"--mode", "location_only", "--out",
                                                                 (dir / "run").string()})));
    EXPECT_EQ(r.code, kExitOk) << r.log;
}

TEST(Cli, SweepRowsAndDeterminism) {
    const auto dir = dataset("cli_sweep");
    const auto base = concat({"sweep"}, data_args(dir));
    const auto one = run(concat(base, {"--batch", "4", "--dropout", "0.5", "--out", (dir / "s1").string()}));
    ASSERT_EQ(one.code, kExitOk) << one.log;
    EXPECT_EQ(std::count(one.out.begin(), one.out.end(), '\n'), 2);

    const auto grid = run(concat(base, {"--batch", "4,8", "--dropout", "0.5,0.7", "--out", (dir / "s2").string()}));
    ASSERT_EQ(grid.code, kExitOk) << grid.log;
    const auto again = run(concat(base, {"--batch", "4,8", "--dropout", "0.5,0.7", "--out", (dir / "s3").string()}));
    EXPECT_EQ(read_file(dir / "s2/sweep.csv"), read_file(dir / "s3/sweep.csv"));
    EXPECT_EQ(std::count(grid.out.begin(), grid.out.end(), '\n'), 5);

    // Images missing on disk with an image mode: data error before any cell runs.
    std::filesystem::remove_all(dir / "images");
    EXPECT_EQ(run(concat(base, {"--out", (dir / "s4").string()})).code, kExitData);
}

TEST(Cli, SweepAllCellsFailingExitsThree) {
    const auto dir = dataset("cli_sweep_fail");
    // An empty training split fails inside every cell.
    const auto r = run(concat({"sweep"}, concat(data_args(dir), {"--batch", "4", "--dropout", "0.5", "--split", "0.01",
                                                                 "--out", (dir / "s").string()})));
    EXPECT_EQ(r.code, kExitData) << r.log;
}

TEST(Cli, IngestWritesRasters) {
    const auto dir = dataset("cli_ingest");
    const auto r = run({"ingest", "--manifest", (dir / "manifest.csv").string(), "--bodymap",
                        (dir / "bodymap.csv").string(), "--image-size", "8", "--out", (dir / "ing").string()});
    ASSERT_EQ(r.code, kExitOk) << r.log;
    EXPECT_EQ(load_manifest(dir / "ing/manifest.csv").size(), 16u);
    EXPECT_NE(r.out.find("records 16"), std::string::npos);
}
