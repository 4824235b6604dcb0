#pragma once

#include "bubblecast/diffcore.hpp"
#include "bubblecast/evaluation.hpp"
#include "bubblecast/network.hpp"
#include "bubblecast/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bubblecast::training {

inline constexpr double kProbClamp = 1e-7;

enum class Metric { count_accuracy, span_mcc, span_f1 };

[[nodiscard]] std::string metric_name(Metric m);
[[nodiscard]] Metric parse_metric(const std::string& name);
[[nodiscard]] double metric_value(const evaluation::MetricsReport& r, Metric m);

struct TrainConfig {
    double learning_rate = 3e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double weight_decay = 1e-5;  ///< decoupled
    double focal_alpha = 2.0;
    double focal_gamma = 5.0;
    int max_epochs = 50;
    int patience = 5;
    int batch_size = 32;
    std::uint64_t rng_seed = 0;
    Metric early_stopping = Metric::count_accuracy;
    Metric selection = Metric::span_mcc;
    double lr_lower = 1e-5;  ///< learning rates must lie strictly inside (lr_lower, lr_upper)
    double lr_upper = 1e-3;
    bool flat_stream = false;

    struct Grid {
        std::vector<int> hidden_dim;
        std::vector<double> learning_rate;
    } grid;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Losses

/// Multi-hot indicator of span starts (or ends) over the lookahead.
[[nodiscard]] Eigen::VectorXd boundary_indicator(const SpanList& spans, int horizon, bool ends);

/// Mean binary cross-entropy over T with probabilities clamped to [1e-7, 1 - 1e-7].
[[nodiscard]] double bce(const Eigen::VectorXd& probs, const Eigen::VectorXd& target);

struct SpanLoss {
    double start = 0.0;
    double end = 0.0;
    [[nodiscard]] double total() const noexcept { return start + end; }
};

[[nodiscard]] SpanLoss span_bce_loss(const network::SpanProbabilities& probs, const SpanList& spans);

/// -alpha (1 - p)^gamma ln p for the true class, p clamped to >= 1e-7.
[[nodiscard]] double focal_loss(const Eigen::VectorXd& class_probs, int true_count, double alpha, double gamma);

[[nodiscard]] double total_loss(const network::ForwardResult& out, const pipeline::Sample& truth,
                                const TrainConfig& cfg);

// Graph versions used for training.
[[nodiscard]] diff::Var bce(diff::Graph& g, diff::Var probs, const Eigen::VectorXd& target);
[[nodiscard]] diff::Var focal_loss(diff::Graph& g, diff::Var class_probs, int true_count, double alpha,
                                   double gamma);
[[nodiscard]] diff::Var total_loss(diff::Graph& g, const network::ForwardVars& out, const pipeline::Sample& truth,
                                   const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
    std::vector<diff::Tensor> m;
    std::vector<diff::Tensor> v;
    long long step = 0;
};

/**
 * One Adam update from the gradients stored in `params`, followed by decoupled
 * weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
 */
void adam_step(diff::ParamStore& params, AdamState& state, const TrainConfig& cfg, double learning_rate);

/**
 * Tracks the best epoch. An epoch improves when its metric is strictly higher,
 * or equal with a strictly lower validation loss. Stop after `patience`
 * consecutive epochs without improvement.
 */
class EarlyStopping {
public:
    explicit EarlyStopping(int patience);

    /// Records one epoch; returns true when it became the best.
    bool update(double metric, double loss);

    [[nodiscard]] bool should_stop() const noexcept { return stale_ >= patience_; }
    [[nodiscard]] int best_epoch() const noexcept { return best_epoch_; }  ///< 1-based, 0 before any epoch
    [[nodiscard]] double best_metric() const noexcept { return best_metric_; }
    [[nodiscard]] int epochs_seen() const noexcept { return epochs_; }

private:
    int patience_;
    int stale_ = 0;
    int epochs_ = 0;
    int best_epoch_ = 0;
    double best_metric_ = 0.0;
    double best_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    evaluation::MetricsReport val;
};

struct TrainReport {
    int hidden_dim = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_stopping_metric = 0.0;
    double best_selection_metric = 0.0;
    bool stopped_early = false;
    bool diverged = false;
    std::string error;
    double wall_clock_seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json(const TrainConfig& cfg, bool include_timing = false) const;
};

struct TrainResult {
    TrainReport report;
    network::ModelConfig model;
    diff::ParamStore params;  ///< parameters of the best epoch
};

/**
 * Adam over seeded shuffled mini-batches; validation metrics after each epoch;
 * early stopping on cfg.early_stopping. Deterministic in `seed`. A non-finite
 * loss or gradient aborts the trial and marks the report as diverged.
 */
[[nodiscard]] TrainResult train(const pipeline::DatasetSplit& split, const network::ModelConfig& model,
                                const TrainConfig& cfg, std::uint64_t seed);

struct GridResult {
    std::vector<TrainReport> trials;
    std::size_t selected = 0;
    network::ModelConfig model;
    diff::ParamStore params;

    [[nodiscard]] nlohmann::json to_json(const TrainConfig& cfg, bool include_timing = false) const;
};

/// Grid points in canonical order (hidden_dim, then learning rate); empty axes use the base config.
[[nodiscard]] std::vector<std::pair<int, double>> grid_points(const network::ModelConfig& model,
                                                              const TrainConfig& cfg);

/**
 * Trains every grid point (trial k uses seed cfg.rng_seed + k in canonical
 * order) and keeps the one with the best selection metric at its best epoch.
 * Ties go to the earlier point, i.e. smaller hidden_dim then smaller learning
 * rate. Throws NumericError when every trial diverged.
 */
[[nodiscard]] GridResult grid_search(const pipeline::DatasetSplit& split, const network::ModelConfig& model,
                                     const TrainConfig& cfg);

}  // namespace bubblecast::training
