#include "bubblecast/evaluation.hpp"

#include "bubblecast/checkpoint.hpp"
#include "bubblecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace bubblecast::evaluation {

std::vector<int> day_labels(const SpanList& spans, int horizon) {
    if (horizon < 1) throw std::invalid_argument("day_labels: horizon must be positive");
    std::vector<int> out(static_cast<std::size_t>(horizon), 0);
    for (const auto& s : spans) {
        if (s.start < 1 || s.end > horizon || s.start > s.end) {
            throw std::invalid_argument("day_labels: span (" + std::to_string(s.start) + "," +
                                        std::to_string(s.end) + ") outside 1.." + std::to_string(horizon));
        }
        for (int d = s.start; d <= s.end; ++d) out[static_cast<std::size_t>(d) - 1] = 1;
    }
    return out;
}

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] != 0;
        const bool t = truth[i] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double mcc(const ConfusionCounts& c) {
    const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
    if (a == 0.0 || b == 0.0 || d == 0.0 || e == 0.0) return 0.0;
    const double v = (tp * tn - fp * fn) / std::sqrt(a * b * d * e);
    return std::clamp(v, -1.0, 1.0);
}

double f1(const ConfusionCounts& c) {
    if (c.tp == 0) return 0.0;
    const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return 2.0 * p * r / (p + r);
}

double exact_match(std::span<const SpanList> predicted, std::span<const SpanList> truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("exact_match: sample count mismatch");
    long long total = 0, hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        for (const auto& s : predicted[i]) {
            ++total;
            if (std::find(truth[i].begin(), truth[i].end(), s) != truth[i].end()) ++hits;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

double exact_match_day_formula(const ConfusionCounts& c) {
    if (c.total() == 0) return 0.0;
    return static_cast<double>(c.tp + c.fp) / static_cast<double>(c.total());
}

CountMetrics count_metrics(std::span<const int> predicted, std::span<const int> truth, int classes) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw std::invalid_argument("count_metrics: inputs must be non-empty and of equal length");
    }
    std::vector<long long> tp(static_cast<std::size_t>(classes)), fp(tp), fn(tp);
    std::set<int> present;
    long long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int p = predicted[i], t = truth[i];
        if (p < 0 || p >= classes || t < 0 || t >= classes) {
            throw std::invalid_argument("count_metrics: class label outside [0, " + std::to_string(classes) + ")");
        }
        present.insert(p);
        present.insert(t);
        if (p == t) {
            ++correct;
            ++tp[static_cast<std::size_t>(p)];
        } else {
            ++fp[static_cast<std::size_t>(p)];
            ++fn[static_cast<std::size_t>(t)];
        }
    }
    double sum = 0.0;
    for (int k : present) {
        const auto i = static_cast<std::size_t>(k);
        sum += f1(ConfusionCounts{tp[i], fp[i], 0, fn[i]});
    }
    return {static_cast<double>(correct) / static_cast<double>(truth.size()),
            sum / static_cast<double>(present.size())};
}

nlohmann::json MetricsReport::to_json(bool include_day_formula) const {
    nlohmann::json span{{"f1", span_f1}, {"mcc", span_mcc}, {"em", span_em}};
    if (include_day_formula) span["em_day_formula"] = em_day_formula;
    return {{"span", span},
            {"count", {{"acc", count_accuracy}, {"f1", count_f1}}},
            {"n_samples", n_samples},
            {"config_digest", config_digest}};
}

MetricsReport score(std::span<const Prediction> predicted, std::span<const pipeline::Sample> samples,
                    int count_classes) {
    if (predicted.size() != samples.size()) throw std::invalid_argument("score: prediction count mismatch");
    if (samples.empty()) throw DataError("cannot evaluate an empty sample set");
    MetricsReport r;
    std::vector<SpanList> pred_spans, true_spans;
    std::vector<int> pred_counts, true_counts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const int horizon = s.lookahead();
        r.days += confusion(day_labels(predicted[i].spans, horizon), s.lookahead_labels);
        pred_spans.push_back(predicted[i].spans);
        true_spans.push_back(s.true_spans);
        pred_counts.push_back(predicted[i].count);
        true_counts.push_back(s.true_count);
    }
    r.span_f1 = f1(r.days);
    r.span_mcc = mcc(r.days);
    r.span_em = exact_match(pred_spans, true_spans);
    r.em_day_formula = exact_match_day_formula(r.days);
    const CountMetrics cm = count_metrics(pred_counts, true_counts, count_classes);
    r.count_accuracy = cm.accuracy;
    r.count_f1 = cm.macro_f1;
    r.n_samples = samples.size();
    return r;
}

void check_compatible(const network::ModelConfig& cfg, std::span<const pipeline::Sample> samples) {
    for (const auto& s : samples) {
        if (s.feature_dim() != cfg.feature_dim) {
            throw DataError("sample feature dimension " + std::to_string(s.feature_dim()) +
                            " does not match the model's " + std::to_string(cfg.feature_dim));
        }
        if (s.lookahead() != cfg.lookahead) {
            throw DataError("sample lookahead " + std::to_string(s.lookahead()) + " does not match the model's " +
                            std::to_string(cfg.lookahead));
        }
        if (s.true_count >= cfg.count_classes()) {
            throw DataError("sample bubble count exceeds the model's count classes");
        }
    }
}

std::vector<Prediction> predict(const diff::ParamStore& params, const network::ModelConfig& cfg,
                                std::span<const pipeline::Sample> samples, bool flat_stream) {
    check_compatible(cfg, samples);
    std::vector<Prediction> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto seq = s.sequence(flat_stream);
        const network::ForwardResult fr = network::forward(seq, params, cfg);
        out.push_back({fr.extracted, fr.count.count});
    }
    return out;
}

MetricsReport evaluate(const diff::ParamStore& params, const network::ModelConfig& cfg,
                       std::span<const pipeline::Sample> samples, bool flat_stream) {
    const auto preds = predict(params, cfg, samples, flat_stream);
    MetricsReport r = score(preds, samples, cfg.count_classes());
    r.config_digest = network::config_digest(cfg);
    return r;
}

}  // namespace bubblecast::evaluation
