#include "wmc/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "wmc/errors.hpp"

namespace wmc {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= classes() || predicted >= classes()) throw InputError("confusion matrix index out of range");
    ++counts_[truth * classes() + predicted];
    ++total_;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (std::size_t k = 0; k < classes(); ++k) t += at(k, k);
    return t;
}

std::int64_t ConfusionMatrix::true_positives(std::size_t k) const { return at(k, k); }

std::int64_t ConfusionMatrix::false_positives(std::size_t k) const {
    std::int64_t s = 0;
    for (std::size_t r = 0; r < classes(); ++r)
        if (r != k) s += at(r, k);
    return s;
}

std::int64_t ConfusionMatrix::false_negatives(std::size_t k) const {
    std::int64_t s = 0;
    for (std::size_t c = 0; c < classes(); ++c)
        if (c != k) s += at(k, c);
    return s;
}

std::int64_t ConfusionMatrix::true_negatives(std::size_t k) const {
    return total_ - true_positives(k) - false_positives(k) - false_negatives(k);
}

namespace {

double ratio(std::int64_t num, std::int64_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : double(num) / double(den);
}

}  // namespace

MetricsReport score(const ConfusionMatrix& confusion) {
    MetricsReport r;
    r.confusion = confusion;
    const auto n = confusion.classes();
    r.accuracy = confusion.total() ? double(confusion.trace()) / double(confusion.total()) : 0.0;
    r.any_undefined = confusion.total() == 0;
    for (std::size_t k = 0; k < n; ++k) {
        ClassMetrics m;
        m.label = confusion.labels()[k];
        m.tp = confusion.true_positives(k);
        m.fp = confusion.false_positives(k);
        m.fn = confusion.false_negatives(k);
        m.tn = confusion.true_negatives(k);
        bool unused = false;
        m.accuracy = ratio(m.tp + m.tn, confusion.total(), unused);
        m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
        m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
        m.sensitivity = m.recall;
        m.specificity = ratio(m.tn, m.tn + m.fp, m.specificity_undefined);
        m.f1_undefined = m.precision + m.recall == 0.0;
        m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
        r.any_undefined = r.any_undefined || m.precision_undefined || m.recall_undefined || m.f1_undefined ||
                          m.specificity_undefined;
        r.macro.precision += m.precision;
        r.macro.recall += m.recall;
        r.macro.f1 += m.f1;
        r.macro.specificity += m.specificity;
        r.per_class.push_back(m);
    }
    if (n) {
        r.macro.precision /= double(n);
        r.macro.recall /= double(n);
        r.macro.f1 /= double(n);
        r.macro.specificity /= double(n);
    }
    r.macro.sensitivity = r.macro.recall;
    return r;
}

MetricsReport score(const std::vector<std::string>& truth, const std::vector<std::string>& predicted,
                    const std::vector<std::string>& class_set) {
    if (truth.size() != predicted.size())
        throw InputError("label sequences differ in length: " + std::to_string(truth.size()) + " vs " +
                         std::to_string(predicted.size()));
    auto index_of = [&](const std::string& label) {
        const auto it = std::find(class_set.begin(), class_set.end(), label);
        if (it == class_set.end()) throw InputError("label '" + label + "' is not in the class set");
        return std::size_t(it - class_set.begin());
    };
    ConfusionMatrix cm(class_set);
    for (std::size_t k = 0; k < truth.size(); ++k) cm.add(index_of(truth[k]), index_of(predicted[k]));
    return score(cm);
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = confusion.total();
    j["accuracy"] = accuracy;
    j["averaging"] = "macro";
    j["macro"] = {{"precision", macro.precision},
                  {"recall", macro.recall},
                  {"f1", macro.f1},
                  {"specificity", macro.specificity},
                  {"sensitivity", macro.sensitivity}};
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& m : per_class) {
        nlohmann::ordered_json c;
        c["label"] = m.label;
        c["tp"] = m.tp;
        c["fp"] = m.fp;
        c["fn"] = m.fn;
        c["tn"] = m.tn;
        c["accuracy"] = m.accuracy;
        c["precision"] = m.precision;
        c["recall"] = m.recall;
        c["f1"] = m.f1;
        c["specificity"] = m.specificity;
        c["sensitivity"] = m.sensitivity;
        std::vector<std::string> undefined;
        if (m.precision_undefined) undefined.emplace_back("precision");
        if (m.recall_undefined) undefined.emplace_back("recall");
        if (m.f1_undefined) undefined.emplace_back("f1");
        if (m.specificity_undefined) undefined.emplace_back("specificity");
        c["zero_denominator"] = undefined;
        j["per_class"].push_back(c);
    }
    j["degenerate"] = any_undefined;
    auto& cmj = j["confusion"];
    cmj["labels"] = confusion.labels();
    cmj["rows"] = "true";
    cmj["cols"] = "predicted";
    cmj["counts"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < confusion.classes(); ++r) {
        std::vector<std::int64_t> row;
        for (std::size_t c = 0; c < confusion.classes(); ++c) row.push_back(confusion.at(r, c));
        cmj["counts"].push_back(row);
    }
    return j;
}

std::string MetricsReport::csv_header() { return "accuracy,precision,recall,f1,specificity,sensitivity"; }

std::string MetricsReport::csv_row() const {
    return format_metric(accuracy) + "," + format_metric(macro.precision) + "," + format_metric(macro.recall) + "," +
           format_metric(macro.f1) + "," + format_metric(macro.specificity) + "," + format_metric(macro.sensitivity);
}

}  // namespace wmc
