#pragma once

#include "bubblecast/diffcore.hpp"
#include "bubblecast/network.hpp"
#include "bubblecast/pipeline.hpp"
#include "bubblecast/span.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace bubblecast::evaluation {

struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long tn = 0;
    long long fn = 0;

    [[nodiscard]] long long total() const noexcept { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// 1 on every day covered by a span. Throws std::invalid_argument for spans outside 1..T.
[[nodiscard]] std::vector<int> day_labels(const SpanList& spans, int horizon);

[[nodiscard]] ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth);

/// Matthews correlation; 0 when any factor of the denominator is 0.
[[nodiscard]] double mcc(const ConfusionCounts& c);

/// Harmonic mean of precision and recall; 0 when both are 0.
[[nodiscard]] double f1(const ConfusionCounts& c);

/**
 * Predicted spans that equal some true span of the same sample, over all
 * predicted spans; 0 when nothing is predicted.
 */
[[nodiscard]] double exact_match(std::span<const SpanList> predicted, std::span<const SpanList> truth);

/// (tp + fp) / total, the alternative day-level definition, kept for comparison.
[[nodiscard]] double exact_match_day_formula(const ConfusionCounts& c);

struct CountMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

/**
 * Count accuracy and macro F1 averaged over the classes that occur in either
 * list. Labels must lie in [0, classes). Throws std::invalid_argument on empty
 * or unequal inputs.
 */
[[nodiscard]] CountMetrics count_metrics(std::span<const int> predicted, std::span<const int> truth, int classes);

struct MetricsReport {
    double span_f1 = 0.0;
    double span_mcc = 0.0;
    double span_em = 0.0;
    double em_day_formula = 0.0;
    double count_accuracy = 0.0;
    double count_f1 = 0.0;
    ConfusionCounts days;
    std::size_t n_samples = 0;
    std::string config_digest;

    /// {"span": {"f1","mcc","em"}, "count": {"acc","f1"}, "n_samples", "config_digest"}
    [[nodiscard]] nlohmann::json to_json(bool include_day_formula = false) const;
};

struct Prediction {
    SpanList spans;
    int count = 0;
};

/// Aggregates day-level counts over all samples (micro), span EM and count metrics.
[[nodiscard]] MetricsReport score(std::span<const Prediction> predicted, std::span<const pipeline::Sample> samples,
                                  int count_classes);

/// Runs the model on every sample and scores the result.
[[nodiscard]] std::vector<Prediction> predict(const diff::ParamStore& params, const network::ModelConfig& cfg,
                                              std::span<const pipeline::Sample> samples, bool flat_stream = false);

/// Throws DataError when samples do not fit the model shape.
void check_compatible(const network::ModelConfig& cfg, std::span<const pipeline::Sample> samples);

[[nodiscard]] MetricsReport evaluate(const diff::ParamStore& params, const network::ModelConfig& cfg,
                                     std::span<const pipeline::Sample> samples, bool flat_stream = false);

}  // namespace bubblecast::evaluation
