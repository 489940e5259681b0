// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "synthetic_fixture.hpp"
#include "test_util.hpp"
#include "wmc/attention.hpp"
#include "wmc/capsule.hpp"
#include "wmc/cli.hpp"
#include "wmc/gmrnn.hpp"
#include "wmc/gradient_suite.hpp"
#include "wmc/sepconv.hpp"

using namespace wmc;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome gradient_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto rows = run_gradient_suite("all");
    const double secs = seconds_since(t0);
    double worst = 0.0;
    for (const auto& r : rows) {
        worst = std::max(worst, r.max_relative_error);
        o.require(r.passed, r.module + "/" + r.layer + " error " + sci(r.max_relative_error));
    }
    for (const auto& m : gradient_suite_modules()) {
        bool covered = false;
        for (const auto& r : rows) covered = covered || r.module == m;
        o.require(covered, "no rows for " + m);
    }
    o.require(secs < 60.0, "took " + std::to_string(secs) + " s");
    if (o.ok) o.detail = std::to_string(rows.size()) + " layers, max error " + sci(worst) + ", " + sci(secs) + " s";
    return o;
}

Outcome oracle_equivalence() {
    Outcome o;
    Rng rng(777);

    double conv = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Index K = 1 + Index(rng.below(4)), Kout = 1 + Index(rng.below(5));
        const Index kh = 1 + Index(rng.below(4)), kw = 1 + Index(rng.below(4)), s = 1 + Index(rng.below(2));
        const Index H = kh + Index(rng.below(6)), W = kw + Index(rng.below(6));
        SepConvBlock b("b", K, Kout, kh, kw, s, Padding::same);
        for (Parameter* p : b.parameters()) p->value = testutil::random_tensor(p->value.shape(), rng);
        const Tensor x = testutil::random_tensor({K, H, W}, rng);
        const Index oh = (H + s - 1) / s, ow = (W + s - 1) / s;
        const Index ph = std::max<Index>((oh - 1) * s + kh - H, 0) / 2, pw = std::max<Index>((ow - 1) * s + kw - W, 0) / 2;
        const Tensor want = oracle::separable_conv(x, b.depthwise.value, b.pointwise.value, b.bias.value, s, ph, pw, oh, ow);
        conv = std::max(conv, (b.forward(x).data() - want.data()).cwiseAbs().maxCoeff());
    }
    o.require(conv <= 1e-10, "conv error " + sci(conv));

    double ridge = 0.0, grad = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const Index D = 1 + Index(rng.below(8)), N = 1 + Index(rng.below(12));
        const double lambda = rng.uniform(0.1, 3.0), sigma2 = rng.uniform(0.2, 2.0);
        const Eigen::MatrixXd X = testutil::random_matrix(N, D, rng, -2, 2);
        const Eigen::VectorXd y = testutil::random_vector(N, rng, -2, 2);
        RidgeEstimator est(D, lambda, sigma2);
        for (Index n = 0; n < N; ++n) est.observe(X.row(n).transpose(), y[n]);
        const Vector w = est.solve();
        ridge = std::max(ridge, (w - oracle::ridge(X, y, lambda, sigma2)).cwiseAbs().maxCoeff());
        grad = std::max(grad, oracle::ridge_objective_gradient(X, y, w, lambda, sigma2).norm());
    }
    o.require(ridge <= 1e-8, "ridge error " + sci(ridge));
    o.require(grad <= 1e-6, "ridge objective gradient " + sci(grad));

    const std::vector<std::string> universe{"BG", "N", "D", "P", "S", "V"};
    int metric_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<std::string> classes(universe.begin(), universe.begin() + long(2 + rng.below(5)));
        const std::size_t n = 1 + rng.below(200);
        std::vector<std::string> truth, pred;
        for (std::size_t k = 0; k < n; ++k) {
            truth.push_back(classes[rng.below(classes.size())]);
            pred.push_back(classes[rng.below(classes.size())]);
        }
        const auto r = score(truth, pred, classes);
        const auto t = oracle::tally(truth, pred, classes);
        for (std::size_t k = 0; k < classes.size(); ++k) {
            const auto& c = r.per_class[k];
            const auto& b = t.at(classes[k]);
            const double p = b.tp + b.fp ? double(b.tp) / double(b.tp + b.fp) : 0.0;
            const double rc = b.tp + b.fn ? double(b.tp) / double(b.tp + b.fn) : 0.0;
            const double sp = b.tn + b.fp ? double(b.tn) / double(b.tn + b.fp) : 0.0;
            metric_mismatch += c.tp != b.tp || c.fp != b.fp || c.fn != b.fn || c.tn != b.tn || c.precision != p ||
                               c.recall != rc || c.specificity != sp;
        }
    }
    o.require(metric_mismatch == 0, std::to_string(metric_mismatch) + " metric mismatches");

    double routing = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix pred = testutil::random_matrix(6, 4, rng, -2, 2);
        std::vector<std::vector<std::vector<double>>> u(3);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 2; ++j) u[std::size_t(i)].emplace_back(pred.row(i * 2 + j).begin(), pred.row(i * 2 + j).end());
        const auto got = dynamic_routing(pred, 3, 2, 3);
        const auto want = oracle::routing(u, 3);
        for (Index j = 0; j < 2; ++j)
            for (Index k = 0; k < 4; ++k)
                routing = std::max(routing, std::abs(got.outputs(j, k) - want.v[std::size_t(j)][std::size_t(k)]));
    }
    o.require(routing <= 1e-10, "routing error " + sci(routing));
    if (o.ok)
        o.detail = "conv " + sci(conv) + ", ridge " + sci(ridge) + " (grad " + sci(grad) + "), metrics exact, routing " +
                   sci(routing);
    return o;
}

Outcome analytic_fixtures() {
    Outcome o;
    const Vector e = Vector::Unit(5, 2);
    o.require((squash(e) - 0.5 * e).cwiseAbs().maxCoeff() <= 1e-12, "squash(unit) != unit/2");

    GmrnnCell cell(GmrnnConfig{4, 3});
    for (Parameter* p : cell.parameters()) p->value.data().setZero();
    const auto s = cell.step(Vector::Unit(4, 0), 0.5 * Vector::Unit(4, 0), Vector::Zero(3), Vector::Zero(3));
    o.require((s.c.array() - 0.622459).abs().maxCoeff() <= 1e-6, "C1 = " + std::to_string(s.c[0]));
    o.require((s.h.array() - 0.27639).abs().maxCoeff() <= 1e-5,
              "h1 = " + std::to_string(s.h[0]) + ", stated 0.27639 +- 1e-5, scalar tanh(sigmoid(0.5)) * 0.5 = " +
                  std::to_string(std::tanh(1.0 / (1.0 + std::exp(-0.5))) * 0.5));

    double onehot = 0.0;
    for (Index l = 0; l < 6; ++l) {
        RidgeEstimator est(6, 1.0, 1.0);
        onehot = std::max(onehot, (est.update_and_solve(Vector::Unit(6, l), 1.0) - 0.5 * Vector::Unit(6, l)).cwiseAbs().maxCoeff());
    }
    o.require(onehot <= 1e-12, "one-hot ridge error " + sci(onehot));
    if (o.ok) o.detail = "C1 " + std::to_string(s.c[0]) + ", h1 " + std::to_string(s.h[0]) + ", one-hot error " + sci(onehot);
    return o;
}

Outcome invariant_suites() {
    Outcome o;
    Rng rng(4242);
    int coupling_bad = 0, norm_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index nin = 1 + Index(rng.below(6)), nout = 1 + Index(rng.below(5)), d = 1 + Index(rng.below(5));
        const auto r = dynamic_routing(testutil::random_matrix(nin * nout, d, rng, -10, 10), nin, nout, 3);
        for (const Matrix& c : r.coupling_history)
            coupling_bad += (c.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-12 || c.minCoeff() < 0.0;
        for (Index j = 0; j < nout; ++j) norm_bad += !(r.outputs.row(j).norm() < 1.0);
    }
    o.require(coupling_bad == 0, std::to_string(coupling_bad) + " coupling rows off");
    o.require(norm_bad == 0, std::to_string(norm_bad) + " capsule norms >= 1");

    GmrnnCell cell(GmrnnConfig{6, 5});
    int gate_bad = 0;
    Vector h = Vector::Zero(5), c = Vector::Zero(5);
    for (int t = 0; t < 1000; ++t) {
        if (t % 50 == 0)
            for (Parameter* p : cell.parameters()) p->value = testutil::random_tensor(p->value.shape(), rng, -0.5, 0.5);
        const auto s = cell.step(testutil::random_vector(6, rng, -1, 1), testutil::random_vector(6, rng), h, c);
        for (const Vector* g : {&s.f, &s.i, &s.o, &s.m, &s.c}) gate_bad += !(g->minCoeff() > 0.0 && g->maxCoeff() < 1.0);
        gate_bad += !(s.g.minCoeff() > -1.0 && s.g.maxCoeff() < 1.0);
        gate_bad += !(s.h.minCoeff() >= 0.0 && s.h.maxCoeff() < std::tanh(1.0));
        h = s.h;
        c = s.c;
    }
    o.require(gate_bad == 0, std::to_string(gate_bad) + " GMRNN range violations");

    int softmax_bad = 0, hull_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index n = 1 + Index(rng.below(8)), d = 1 + Index(rng.below(6));
        const Vector x = testutil::random_vector(n, rng, -20, 20);
        const Vector p = softmax(x);
        softmax_bad += std::abs(p.sum() - 1.0) > 1e-12;
        softmax_bad += (softmax(Vector(x.array() + rng.uniform(-50, 50))) - p).cwiseAbs().maxCoeff() > 1e-12;
        const Matrix q = testutil::random_matrix(n, d, rng, -4, 4);
        const Vector m = softmatch(Vector(q.row(0).transpose()), q);
        softmax_bad += std::abs(m.sum() - 1.0) > 1e-12;
        const Matrix out = self_attention(q).output;
        for (Index k = 0; k < d; ++k)
            hull_bad += out.col(k).minCoeff() < q.col(k).minCoeff() - 1e-12 || out.col(k).maxCoeff() > q.col(k).maxCoeff() + 1e-12;
    }
    o.require(softmax_bad == 0, std::to_string(softmax_bad) + " softmax/softmatch violations");
    o.require(hull_bad == 0, std::to_string(hull_bad) + " attention hull violations");
    if (o.ok) o.detail = "routing, capsule norm, GMRNN ranges, softmax/softmatch, attention hull";
    return o;
}

struct EndToEnd {
    double accuracy = 0.0;
    int epochs_to_target = -1;
    double seconds = 0.0;
};

EndToEnd train_synthetic(Mode mode) {
    auto cfg = testutil::synthetic_config();
    cfg.mode = mode;
    cfg.epochs = 300;
    cfg.train_fraction = 1.0;
    const auto data = testutil::synthetic_examples();
    FusionModel model(cfg);
    EndToEnd r;
    const auto t0 = Clock::now();
    const auto report = train(model, data, {}, [&](const EpochStats& e) {
        if (r.epochs_to_target < 0 && e.accuracy >= 0.95) r.epochs_to_target = e.epoch;
    });
    r.seconds = seconds_since(t0);
    r.accuracy = report.train_metrics.accuracy;
    return r;
}

Outcome end_to_end() {
    Outcome o;
    const auto multi = train_synthetic(Mode::multimodal);
    const auto loc = train_synthetic(Mode::location_only);
    o.require(multi.accuracy >= 0.95, "multimodal train accuracy " + std::to_string(multi.accuracy));
    o.require(multi.seconds < 300.0, "multimodal took " + std::to_string(multi.seconds) + " s");
    o.require(loc.accuracy >= 0.80, "location_only train accuracy " + std::to_string(loc.accuracy));
    o.require(multi.accuracy >= loc.accuracy, "multimodal below location_only");
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "multimodal %.4f after 300 epochs (%.1f s; running accuracy first >= 0.95 at epoch %d), "
                  "location_only %.4f",
                  multi.accuracy, multi.seconds, multi.epochs_to_target, loc.accuracy);
    if (o.ok) o.detail = buf;
    else o.detail += std::string(" | ") + buf;
    return o;
}

Outcome determinism() {
    Outcome o;
    const auto root = testutil::scratch_dir("acceptance_determinism");
    write_synthetic_dataset(root / "data", SyntheticOptions{});
    std::vector<std::string> files{"checkpoint.wmck", "checkpoint.wmck.json", "epochs.csv", "metrics.json"};
    for (const char* run : {"a", "b"}) {
        std::ostringstream out, log;
        const int code = run_cli({"train", "--config", (root / "data/dataset.cfg").string(), "--manifest",
                                  (root / "data/manifest.csv").string(), "--bodymap", (root / "data/bodymap.csv").string(),
                                  "--epochs", "20", "--seed", "99", "--out", (root / run).string()},
                                 out, log);
        o.require(code == kExitOk, std::string("train run ") + run + " exited " + std::to_string(code) + ": " + log.str());
    }
    if (!o.ok) return o;
    for (const auto& f : files) o.require(read_file(root / "a" / f) == read_file(root / "b" / f), f + " differs");
    if (o.ok) o.detail = "two seeded CLI train runs: checkpoint, sidecar, epochs.csv, metrics.json byte-identical";
    return o;
}

Outcome format_round_trips() {
    Outcome o;
    Rng rng(5150);
    FusionModel model(testutil::synthetic_config());
    const auto tensors = model.named_tensors();
    const std::string bytes = encode_checkpoint(tensors);
    const auto back = decode_checkpoint(bytes);
    bool same = back.size() == tensors.size();
    for (std::size_t k = 0; same && k < back.size(); ++k)
        same = back[k].name == tensors[k].name && back[k].value == tensors[k].value;
    o.require(same && encode_checkpoint(back) == bytes, "checkpoint round trip not bit-exact");

    Tensor img = testutil::random_tensor({3, 32, 32}, rng, 0, 1);
    for (Index k = 0; k < img.size(); ++k) img[k] = double(float(img[k]));
    const std::string raster = encode_raster(img);
    o.require(decode_raster(raster) == img && encode_raster(decode_raster(raster)) == raster,
              "raster round trip not bit-exact");

    const auto dir = testutil::scratch_dir("acceptance_bodymap");
    std::string csv = sample_body_map().to_csv();
    csv.replace(csv.find("\n437,436\n"), 9, "\n437,438\n");
    write_file(dir / "broken.csv", csv);
    bool rejected = false;
    try {
        BodyMap::load(dir / "broken.csv");
    } catch (const IngestError&) {
        rejected = true;
    }
    o.require(rejected, "broken body map accepted");
    if (o.ok) o.detail = std::to_string(tensors.size()) + "-tensor checkpoint and raster bit-exact; broken body map rejected";
    return o;
}

Outcome sweep_harness() {
    Outcome o;
    const auto root = testutil::scratch_dir("acceptance_sweep");
    write_synthetic_dataset(root / "data", SyntheticOptions{});
    std::ostringstream out, log;
    const auto t0 = Clock::now();
    const int code = run_cli({"sweep", "--config", (root / "data/dataset.cfg").string(), "--manifest",
                              (root / "data/manifest.csv").string(), "--bodymap", (root / "data/bodymap.csv").string(),
                              "--epochs", "5", "--out", (root / "out").string()},
                             out, log);
    o.require(code == kExitOk, "sweep exited " + std::to_string(code) + ": " + log.str());
    if (!o.ok) return o;
    const std::string csv = read_file(root / "out/sweep.csv");
    const long rows = std::count(csv.begin(), csv.end(), '\n') - 1;
    const long ok_rows = [&] {
        long n = 0;
        for (std::size_t p = csv.find(",ok,"); p != std::string::npos; p = csv.find(",ok,", p + 1)) ++n;
        return n;
    }();
    o.require(rows == 25, std::to_string(rows) + " rows");
    o.require(ok_rows == 25, std::to_string(ok_rows) + " cells succeeded");
    if (o.ok) o.detail = "5x5 grid, 25 rows, all cells ok (" + sci(seconds_since(t0)) + " s)";
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"gradient_suite", gradient_suite},   {"oracle_equivalence", oracle_equivalence},
        {"analytic_fixtures", analytic_fixtures}, {"invariant_suites", invariant_suites},
        {"end_to_end_sanity", end_to_end},    {"determinism", determinism},
        {"format_round_trips", format_round_trips}, {"sweep_harness", sweep_harness},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r.ok = false;
            r.detail = std::string("exception: ") + e.what();
        }
        failed += !r.ok;
        std::cout << (r.ok ? "PASS " : "FAIL ") << name << ": " << r.detail << std::endl;
    }
    return failed ? 1 : 0;
}
