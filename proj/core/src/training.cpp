#include "bubblecast/training.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bubblecast::training {

using diff::Graph;
using diff::Var;

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::count_accuracy: return "count_accuracy";
        case Metric::span_mcc: return "span_mcc";
        case Metric::span_f1: return "span_f1";
    }
    return "count_accuracy";
}

Metric parse_metric(const std::string& name) {
    if (name == "count_accuracy") return Metric::count_accuracy;
    if (name == "span_mcc") return Metric::span_mcc;
    if (name == "span_f1") return Metric::span_f1;
    throw std::invalid_argument("unknown metric '" + name + "' (expected count_accuracy, span_mcc or span_f1)");
}

double metric_value(const evaluation::MetricsReport& r, Metric m) {
    switch (m) {
        case Metric::count_accuracy: return r.count_accuracy;
        case Metric::span_mcc: return r.span_mcc;
        case Metric::span_f1: return r.span_f1;
    }
    return r.count_accuracy;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train: " + m); };
    auto check_lr = [&](double lr) {
        if (!(lr > lr_lower && lr < lr_upper)) {
            fail("learning rate " + std::to_string(lr) + " outside (" + std::to_string(lr_lower) + ", " +
                 std::to_string(lr_upper) + ")");
        }
    };
    if (!(lr_lower >= 0.0 && lr_upper > lr_lower)) fail("invalid learning-rate bounds");
    check_lr(learning_rate);
    for (double lr : grid.learning_rate) check_lr(lr);
    for (int h : grid.hidden_dim) {
        if (h < 1) fail("grid hidden_dim must be positive");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        fail("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(focal_alpha > 0.0) || !(focal_gamma >= 0.0)) fail("focal alpha must be > 0 and gamma >= 0");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 1) fail("patience must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
}

// ---------------------------------------------------------------------------
// Losses

Eigen::VectorXd boundary_indicator(const SpanList& spans, int horizon, bool ends) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(horizon);
    for (const auto& s : spans) {
        const int day = ends ? s.end : s.start;
        if (day < 1 || day > horizon) throw std::invalid_argument("boundary_indicator: span outside the lookahead");
        y(day - 1) = 1.0;
    }
    return y;
}

double bce(const Eigen::VectorXd& probs, const Eigen::VectorXd& target) {
    if (probs.size() != target.size() || probs.size() == 0) throw ShapeError("bce: shape mismatch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs(i), kProbClamp, 1.0 - kProbClamp);
        sum += target(i) * std::log(p) + (1.0 - target(i)) * std::log(1.0 - p);
    }
    return -sum / static_cast<double>(probs.size());
}

SpanLoss span_bce_loss(const network::SpanProbabilities& probs, const SpanList& spans) {
    const auto horizon = static_cast<int>(probs.p_start.size());
    return {bce(probs.p_start, boundary_indicator(spans, horizon, false)),
            bce(probs.p_end, boundary_indicator(spans, horizon, true))};
}

double focal_loss(const Eigen::VectorXd& class_probs, int true_count, double alpha, double gamma) {
    if (true_count < 0 || true_count >= class_probs.size()) throw std::invalid_argument("focal_loss: class out of range");
    const double p = std::clamp(class_probs(true_count), kProbClamp, 1.0);
    return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

double total_loss(const network::ForwardResult& out, const pipeline::Sample& truth, const TrainConfig& cfg) {
    return span_bce_loss(out.spans, truth.true_spans).total() +
           focal_loss(out.count.probs, truth.true_count, cfg.focal_alpha, cfg.focal_gamma);
}

Var bce(Graph& g, Var probs, const Eigen::VectorXd& target) {
    if (probs.rows() != target.size() || probs.cols() != 1) throw ShapeError("bce: shape mismatch");
    const Var p = diff::clamp(probs, kProbClamp, 1.0 - kProbClamp);
    const Var y = g.constant(target);
    const Var not_y = g.constant(Eigen::VectorXd::Ones(target.size()) - target);
    const Var ll = diff::add(diff::mul(y, diff::log(p)), diff::mul(not_y, diff::log(diff::shift(diff::neg(p), 1.0))));
    return diff::scale(diff::sum(ll), -1.0 / static_cast<double>(target.size()));
}

Var focal_loss(Graph&, Var class_probs, int true_count, double alpha, double gamma) {
    if (true_count < 0 || true_count >= class_probs.rows()) {
        throw std::invalid_argument("focal_loss: class out of range");
    }
    const Var p = diff::clamp(diff::element(class_probs, true_count), kProbClamp, 1.0);
    const Var weight = diff::pow(diff::shift(diff::neg(p), 1.0), gamma);
    return diff::scale(diff::mul(weight, diff::log(p)), -alpha);
}

Var total_loss(Graph& g, const network::ForwardVars& out, const pipeline::Sample& truth, const TrainConfig& cfg) {
    const int horizon = truth.lookahead();
    const Var start = bce(g, out.p_start, boundary_indicator(truth.true_spans, horizon, false));
    const Var end = bce(g, out.p_end, boundary_indicator(truth.true_spans, horizon, true));
    const Var count = focal_loss(g, out.count_probs, truth.true_count, cfg.focal_alpha, cfg.focal_gamma);
    return diff::add(diff::add(start, end), count);
}

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(diff::ParamStore& params, AdamState& state, const TrainConfig& cfg, double learning_rate) {
    auto entries = params.entries();
    if (state.m.empty()) {
        for (const auto& e : entries) {
            state.m.push_back(diff::Tensor::Zero(e.value.rows(), e.value.cols()));
            state.v.push_back(diff::Tensor::Zero(e.value.rows(), e.value.cols()));
        }
    }
    if (state.m.size() != entries.size()) throw std::invalid_argument("adam_step: state does not match parameters");
    ++state.step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * e.grad;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * e.grad.cwiseProduct(e.grad);
        const diff::Tensor update =
            (state.m[i] / c1).array() / ((state.v[i] / c2).array().sqrt() + cfg.adam_epsilon);
        e.value -= learning_rate * (update + cfg.weight_decay * e.value);
    }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("early stopping patience must be >= 1");
}

bool EarlyStopping::update(double metric, double loss) {
    ++epochs_;
    const bool better = best_epoch_ == 0 || metric > best_metric_ || (metric == best_metric_ && loss < best_loss_);
    if (better) {
        best_epoch_ = epochs_;
        best_metric_ = metric;
        best_loss_ = loss;
        stale_ = 0;
    } else {
        ++stale_;
    }
    return better;
}

// ---------------------------------------------------------------------------
// Training

namespace {

nlohmann::json metrics_json(const evaluation::MetricsReport& r) {
    return {{"f1", r.span_f1},
            {"mcc", r.span_mcc},
            {"em", r.span_em},
            {"count_acc", r.count_accuracy},
            {"count_f1", r.count_f1}};
}

struct Evaluated {
    evaluation::MetricsReport metrics;
    double loss = 0.0;
};

Evaluated evaluate_split(const std::vector<pipeline::Sample>& samples, const std::vector<std::vector<Eigen::VectorXd>>& seqs,
                         const diff::ParamStore& params, const network::ModelConfig& model, const TrainConfig& cfg) {
    std::vector<evaluation::Prediction> preds;
    double loss = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const network::ForwardResult fr = network::forward(seqs[i], params, model);
        loss += total_loss(fr, samples[i], cfg);
        preds.push_back({fr.extracted, fr.count.count});
    }
    Evaluated out;
    out.metrics = evaluation::score(preds, samples, model.count_classes());
    out.loss = loss / static_cast<double>(samples.size());
    if (!std::isfinite(out.loss)) throw NumericError("validation loss is not finite");
    return out;
}

}  // namespace

nlohmann::json TrainReport::to_json(const TrainConfig& cfg, bool include_timing) const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) {
        epochs_json.push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss},
                               {"val", metrics_json(e.val)}});
    }
    nlohmann::json j{{"hidden_dim", hidden_dim},
                     {"learning_rate", learning_rate},
                     {"seed", seed},
                     {"epochs", std::move(epochs_json)},
                     {"best_epoch", best_epoch},
                     {"early_stopping_metric", metric_name(cfg.early_stopping)},
                     {"best_early_stopping_value", best_stopping_metric},
                     {"selection_metric", metric_name(cfg.selection)},
                     {"best_selection_value", best_selection_metric},
                     {"stopped_early", stopped_early},
                     {"diverged", diverged}};
    if (!error.empty()) j["error"] = error;
    if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
}

TrainResult train(const pipeline::DatasetSplit& split, const network::ModelConfig& model, const TrainConfig& cfg,
                  std::uint64_t seed) {
    cfg.validate();
    model.validate();
    if (split.train.empty() || split.validation.empty()) {
        throw DataError("training needs non-empty train and validation sets");
    }
    evaluation::check_compatible(model, split.train);
    evaluation::check_compatible(model, split.validation);
    const auto started = std::chrono::steady_clock::now();

    std::vector<std::vector<Eigen::VectorXd>> train_seqs, val_seqs;
    for (const auto& s : split.train) train_seqs.push_back(s.sequence(cfg.flat_stream));
    for (const auto& s : split.validation) val_seqs.push_back(s.sequence(cfg.flat_stream));

    TrainResult result;
    result.model = model;
    result.params = network::init_params(model, derive_seed(seed, "init"));
    TrainReport& report = result.report;
    report.hidden_dim = model.hidden_dim;
    report.learning_rate = cfg.learning_rate;
    report.seed = seed;

    diff::ParamStore params = result.params;
    AdamState adam;
    EarlyStopping stopper(cfg.patience);
    std::mt19937_64 rng(derive_seed(seed, "shuffle"));
    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    try {
        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
            }
            double epoch_loss = 0.0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
                const std::size_t b1 = std::min(order.size(), b0 + batch);
                params.zero_grad();
                for (std::size_t k = b0; k < b1; ++k) {
                    const std::size_t idx = order[k];
                    Graph g(&params);
                    const network::ForwardVars fv = network::build_forward(g, train_seqs[idx], model);
                    const Var loss = total_loss(g, fv, split.train[idx], cfg);
                    g.backward(loss);
                    epoch_loss += loss.scalar();
                }
                const double inv = 1.0 / static_cast<double>(b1 - b0);
                for (auto& e : params.entries()) e.grad *= inv;
                adam_step(params, adam, cfg, cfg.learning_rate);
            }
            EpochRecord rec;
            rec.epoch = epoch;
            rec.train_loss = epoch_loss / static_cast<double>(order.size());
            if (!std::isfinite(rec.train_loss)) throw NumericError("training loss is not finite");
            const Evaluated val = evaluate_split(split.validation, val_seqs, params, model, cfg);
            rec.val = val.metrics;
            rec.val_loss = val.loss;
            report.epochs.push_back(rec);
            if (stopper.update(metric_value(val.metrics, cfg.early_stopping), val.loss)) {
                result.params = params;
                report.best_epoch = epoch;
                report.best_stopping_metric = metric_value(val.metrics, cfg.early_stopping);
                report.best_selection_metric = metric_value(val.metrics, cfg.selection);
            }
            if (stopper.should_stop()) {
                report.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    } catch (const NumericError& e) {
        report.diverged = true;
        report.error = e.what();
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

std::vector<std::pair<int, double>> grid_points(const network::ModelConfig& model, const TrainConfig& cfg) {
    std::vector<int> hidden = cfg.grid.hidden_dim;
    std::vector<double> rates = cfg.grid.learning_rate;
    if (hidden.empty()) hidden.push_back(model.hidden_dim);
    if (rates.empty()) rates.push_back(cfg.learning_rate);
    std::vector<std::pair<int, double>> points;
    for (int h : hidden) {
        for (double lr : rates) points.emplace_back(h, lr);
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

nlohmann::json GridResult::to_json(const TrainConfig& cfg, bool include_timing) const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& r : trials) t.push_back(r.to_json(cfg, include_timing));
    return {{"trials", std::move(t)},
            {"selected", selected},
            {"selected_hyperparameters",
             {{"hidden_dim", trials.at(selected).hidden_dim}, {"learning_rate", trials.at(selected).learning_rate}}},
            {"selection_metric", metric_name(cfg.selection)}};
}

GridResult grid_search(const pipeline::DatasetSplit& split, const network::ModelConfig& model, const TrainConfig& cfg) {
    cfg.validate();
    const auto points = grid_points(model, cfg);
    GridResult out;
    bool have = false;
    for (std::size_t k = 0; k < points.size(); ++k) {
        network::ModelConfig m = model;
        m.hidden_dim = points[k].first;
        TrainConfig c = cfg;
        c.learning_rate = points[k].second;
        TrainResult r = train(split, m, c, cfg.rng_seed + k);
        out.trials.push_back(r.report);
        if (r.report.diverged || r.report.best_epoch == 0) continue;
        if (!have || r.report.best_selection_metric > out.trials[out.selected].best_selection_metric) {
            out.selected = k;
            out.model = r.model;
            out.params = std::move(r.params);
            have = true;
        }
    }
    if (!have) throw NumericError("grid search: every trial diverged");
    return out;
}

}  // namespace bubblecast::training
