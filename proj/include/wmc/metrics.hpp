#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace wmc {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::string> labels);

    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t classes() const { return labels_.size(); }

    void add(std::size_t truth, std::size_t predicted);
    std::int64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes() + predicted]; }
    std::int64_t total() const { return total_; }
    std::int64_t trace() const;

    // One-vs-rest counts for class k.
    std::int64_t true_positives(std::size_t k) const;
    std::int64_t false_positives(std::size_t k) const;
    std::int64_t false_negatives(std::size_t k) const;
    std::int64_t true_negatives(std::size_t k) const;

private:
    std::vector<std::string> labels_;
    std::vector<std::int64_t> counts_;
    std::int64_t total_ = 0;
};

struct ClassMetrics {
    std::string label;
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, specificity = 0, sensitivity = 0;
    /// Set when a denominator was zero and the 0/0 convention (value 0) applied.
    bool precision_undefined = false, recall_undefined = false, f1_undefined = false, specificity_undefined = false;
};

struct MacroMetrics {
    double precision = 0, recall = 0, f1 = 0, specificity = 0, sensitivity = 0;
};

struct MetricsReport {
    double accuracy = 0;  // micro: trace / total
    std::vector<ClassMetrics> per_class;
    MacroMetrics macro;
    ConfusionMatrix confusion{{}};
    bool any_undefined = false;

    nlohmann::ordered_json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// One-vs-rest scoring with unweighted macro averages.
MetricsReport score(const std::vector<std::string>& truth, const std::vector<std::string>& predicted,
                    const std::vector<std::string>& class_set);
MetricsReport score(const ConfusionMatrix& confusion);

std::string format_metric(double v);

}  // namespace wmc
