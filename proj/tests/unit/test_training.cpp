#include "bubblecast/errors.hpp"
#include "bubblecast/pipeline.hpp"
#include "bubblecast/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bubblecast;
using namespace bubblecast::training;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
    VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

double hand_bce(const VectorXd& p, const VectorXd& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) s -= y(i) * std::log(p(i)) + (1 - y(i)) * std::log(1 - p(i));
    return s / static_cast<double>(p.size());
}

network::ModelConfig tiny_model(int feature_dim, int hidden = 4, int tau = 3, int T = 5) {
    network::ModelConfig m;
    m.feature_dim = feature_dim;
    m.hidden_dim = hidden;
    m.lookback = tau;
    m.lookahead = T;
    return m;
}

pipeline::DatasetSplit planted_split(int assets) {
    pipeline::PlantedConfig pc;
    pc.assets = assets;
    pc.length = 60;
    pc.feature_dim = 4;
    const auto data = pipeline::synth_planted_dataset(pc);
    pipeline::SampleOptions so;
    const auto samples = pipeline::make_samples(data.frames, data.features, data.labels, so);
    return pipeline::split_chronological(samples, 0.25, 0.2);
}

TrainConfig quick_config(int epochs) {
    TrainConfig c;
    c.learning_rate = 5e-4;
    c.max_epochs = epochs;
    c.patience = epochs;
    c.batch_size = 8;
    return c;
}

}  // namespace

TEST(SpanLoss, Examples) {
    network::SpanProbabilities perfect{vec({0, 1, 0, 0, 0}), vec({0, 0, 0, 1, 0})};
    EXPECT_LE(span_bce_loss(perfect, {{2, 4}}).total(), 1e-6);

    network::SpanProbabilities half{VectorXd::Constant(5, 0.5), VectorXd::Constant(5, 0.5)};
    const SpanLoss h = span_bce_loss(half, {{2, 4}});
    EXPECT_NEAR(h.start, std::log(2.0), 1e-15);
    EXPECT_NEAR(h.end, std::log(2.0), 1e-15);

    network::SpanProbabilities p{vec({0.1, 0.9, 0.1, 0.1, 0.1}), vec({0.1, 0.1, 0.1, 0.9, 0.1})};
    const SpanLoss l = span_bce_loss(p, {{2, 4}});
    EXPECT_NEAR(l.start, hand_bce(p.p_start, vec({0, 1, 0, 0, 0})), 1e-15);
    EXPECT_NEAR(l.end, hand_bce(p.p_end, vec({0, 0, 0, 1, 0})), 1e-15);
    EXPECT_NEAR(l.start, -std::log(0.9), 1e-15);
}

TEST(SpanLoss, MultiHotIndicators) {
    EXPECT_EQ(boundary_indicator({{1, 2}, {4, 6}}, 6, false), vec({1, 0, 0, 1, 0, 0}));
    EXPECT_EQ(boundary_indicator({{1, 2}, {4, 6}}, 6, true), vec({0, 1, 0, 0, 0, 1}));
}

TEST(FocalLoss, Examples) {
    EXPECT_EQ(focal_loss(vec({0.0, 1.0, 0.0}), 1, 2.0, 5.0), 0.0);
    EXPECT_NEAR(focal_loss(vec({0.5, 0.5}), 0, 2.0, 5.0), -2.0 * std::pow(0.5, 5) * std::log(0.5), 1e-15);
    EXPECT_NEAR(focal_loss(vec({0.5, 0.5}), 0, 2.0, 5.0), 0.04332, 1e-5);
    EXPECT_NEAR(focal_loss(vec({0.2, 0.3, 0.5}), 1, 1.0, 0.0), -std::log(0.3), 1e-15);
    EXPECT_NEAR(focal_loss(vec({1.0, 0.0}), 1, 1.0, 0.0), -std::log(1e-7), 1e-9);  // clamped
}

TEST(TotalLoss, SumOfPartsAndNonNegative) {
    const network::ModelConfig m = tiny_model(3);
    const auto params = network::init_params(m, 4);
    pipeline::Sample s;
    s.lookback_features = {{VectorXd::Constant(3, 0.2)}, {VectorXd::Constant(3, -0.1)}, {VectorXd::Constant(3, 0.4)}};
    s.lookahead_labels = {0, 1, 1, 0, 0};
    s.true_spans = {{2, 3}};
    s.true_count = 1;
    const network::ForwardResult fr = network::forward(s.sequence(), params, m);
    const TrainConfig cfg;
    const double parts = span_bce_loss(fr.spans, s.true_spans).total() +
                         focal_loss(fr.count.probs, 1, cfg.focal_alpha, cfg.focal_gamma);
    EXPECT_NEAR(total_loss(fr, s, cfg), parts, 1e-15);
    EXPECT_GE(total_loss(fr, s, cfg), 0.0);

    diff::Graph g(params);
    const auto fv = network::build_forward(g, s.sequence(), m);
    EXPECT_NEAR(total_loss(g, fv, s, cfg).scalar(), parts, 1e-14);

    network::ForwardResult zero = fr;
    zero.spans = {vec({0, 1, 0, 0, 0}), vec({0, 0, 1, 0, 0})};
    zero.count.probs = vec({0, 1, 0});
    EXPECT_LE(total_loss(zero, s, cfg), 1e-6);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    const network::ModelConfig m = tiny_model(3, 4, 3, 5);
    pipeline::Sample s;
    s.lookback_features = {{vec({0.3, -0.5, 0.9})}, {vec({-0.2, 0.1, 0.4})}, {vec({0.7, 0.2, -0.6})}};
    s.lookahead_labels = {0, 1, 1, 1, 0};
    s.true_spans = {{2, 4}};
    s.true_count = 1;
    const TrainConfig cfg;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto params = network::init_params(m, seed);
        const double err = diff::finite_diff_check(
            [&](diff::Graph& g) { return total_loss(g, network::build_forward(g, s.sequence(), m), s, cfg); },
            params, 1e-5);
        EXPECT_LE(err, 1e-4);
    }
}

TEST(Adam, ZeroGradientAndDecayIsANoOp) {
    diff::ParamStore ps;
    ps.add("w", vec({0.5, -1.0}));
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState st;
    adam_step(ps, st, cfg, 1e-3);
    EXPECT_EQ(ps.value("w"), vec({0.5, -1.0}));
}

TEST(Adam, FirstStepsMatchHandComputation) {
    diff::ParamStore ps;
    ps.add("w", vec({0.5}));
    TrainConfig cfg;
    AdamState st;
    const double lr = 1e-3;
    double w = 0.5, m = 0.0, v = 0.0;
    for (int k = 1; k <= 3; ++k) {
        const double g = 0.3 * k;
        ps.entries()[0].grad(0, 0) = g;
        adam_step(ps, st, cfg, lr);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, k)), vh = v / (1 - std::pow(0.999, k));
        w -= lr * (mh / (std::sqrt(vh) + 1e-8) + 1e-5 * w);
        EXPECT_NEAR(ps.value("w")(0, 0), w, 1e-15);
    }
}

TEST(EarlyStopping, Rules) {
    EarlyStopping never(1);
    EXPECT_TRUE(never.update(0.5, 1.0));
    EXPECT_FALSE(never.should_stop());
    EXPECT_FALSE(never.update(0.5, 1.0));
    EXPECT_TRUE(never.should_stop());
    EXPECT_EQ(never.epochs_seen(), 2);
    EXPECT_EQ(never.best_epoch(), 1);

    EarlyStopping es(2);
    es.update(0.4, 1.0);
    EXPECT_TRUE(es.update(0.6, 2.0));  // higher metric wins regardless of loss
    EXPECT_TRUE(es.update(0.6, 1.5));  // tie broken by lower loss
    EXPECT_FALSE(es.update(0.6, 1.5));
    EXPECT_FALSE(es.update(0.5, 0.1));
    EXPECT_TRUE(es.should_stop());
    EXPECT_EQ(es.best_epoch(), 3);
    EXPECT_DOUBLE_EQ(es.best_metric(), 0.6);
    EXPECT_THROW(EarlyStopping(0), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.learning_rate = 1e-3;  // bounds are exclusive
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.patience = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.grid.learning_rate = {1e-6};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_EQ(parse_metric(metric_name(Metric::span_f1)), Metric::span_f1);
    EXPECT_THROW((void)parse_metric("auc"), std::invalid_argument);
}

TEST(Train, DeterministicAndLossDecreases) {
    const auto split = planted_split(6);
    ASSERT_FALSE(split.train.empty());
    ASSERT_FALSE(split.validation.empty());
    const network::ModelConfig m = tiny_model(4, 6, 5, 5);
    const TrainConfig cfg = quick_config(4);
    const TrainResult a = train(split, m, cfg, 11);
    const TrainResult b = train(split, m, cfg, 11);
    ASSERT_EQ(a.report.epochs.size(), 4u);
    EXPECT_FALSE(a.report.diverged);
    EXPECT_LT(a.report.epochs.back().train_loss, a.report.epochs.front().train_loss);
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params.entries()[i].value, b.params.entries()[i].value);
    EXPECT_EQ(a.report.to_json(cfg).dump(), b.report.to_json(cfg).dump());
    const TrainResult c = train(split, m, cfg, 12);
    EXPECT_NE(a.params.entries()[0].value, c.params.entries()[0].value);
}

TEST(Train, FixedBatchLossDecreasesForSmallLearningRate) {
    const auto split = planted_split(4);
    const network::ModelConfig m = tiny_model(4, 6, 5, 5);
    TrainConfig cfg;
    auto params = network::init_params(m, 3);
    AdamState st;
    std::vector<pipeline::Sample> batch(split.train.begin(), split.train.begin() + 8);
    auto batch_loss = [&](bool step) {
        params.zero_grad();
        double total = 0.0;
        for (const auto& s : batch) {
            diff::Graph g(&params);
            const diff::Var l = total_loss(g, network::build_forward(g, s.sequence(), m), s, cfg);
            g.backward(l);
            total += l.scalar();
        }
        if (step) {
            for (auto& e : params.entries()) e.grad /= static_cast<double>(batch.size());
            adam_step(params, st, cfg, 1e-4);
        }
        return total / static_cast<double>(batch.size());
    };
    double prev = batch_loss(true);
    for (int k = 0; k < 10; ++k) {
        const double now = batch_loss(true);
        EXPECT_LT(now, prev) << "step " << k;
        prev = now;
    }
}

TEST(Train, PatienceOneStopsAfterTwoEpochsWithoutImprovement) {
    const auto split = planted_split(4);
    const network::ModelConfig m = tiny_model(4, 4, 5, 5);
    TrainConfig cfg = quick_config(10);
    cfg.patience = 1;
    cfg.learning_rate = 1.1e-5;  // too small to move count accuracy
    cfg.early_stopping = Metric::count_accuracy;
    const TrainResult r = train(split, m, cfg, 2);
    ASSERT_GE(r.report.epochs.size(), 2u);
    if (r.report.epochs[1].val.count_accuracy <= r.report.epochs[0].val.count_accuracy &&
        r.report.epochs[1].val_loss >= r.report.epochs[0].val_loss) {
        EXPECT_EQ(r.report.epochs.size(), 2u);
        EXPECT_TRUE(r.report.stopped_early);
        EXPECT_EQ(r.report.best_epoch, 1);
    }
}

TEST(Train, RejectsEmptyOrIncompatibleSplits) {
    auto split = planted_split(4);
    EXPECT_THROW((void)train(split, tiny_model(7, 4, 5, 5), quick_config(1), 1), DataError);
    split.validation.clear();
    EXPECT_THROW((void)train(split, tiny_model(4, 4, 5, 5), quick_config(1), 1), DataError);
}

TEST(GridSearch, SingletonMatchesTrainAndOrderDoesNotMatter) {
    const auto split = planted_split(4);
    const network::ModelConfig m = tiny_model(4, 4, 5, 5);
    TrainConfig cfg = quick_config(2);
    cfg.rng_seed = 40;
    const GridResult single = grid_search(split, m, cfg);
    const TrainResult direct = train(split, m, cfg, 40);
    ASSERT_EQ(single.trials.size(), 1u);
    EXPECT_EQ(single.trials[0].to_json(cfg).dump(), direct.report.to_json(cfg).dump());
    for (std::size_t i = 0; i < direct.params.size(); ++i) {
        EXPECT_EQ(single.params.entries()[i].value, direct.params.entries()[i].value);
    }

    cfg.grid.hidden_dim = {5, 3};
    cfg.grid.learning_rate = {3e-4, 1e-4};
    const GridResult a = grid_search(split, m, cfg);
    cfg.grid.hidden_dim = {3, 5, 3};
    cfg.grid.learning_rate = {1e-4, 3e-4};
    const GridResult b = grid_search(split, m, cfg);
    ASSERT_EQ(a.trials.size(), 4u);
    EXPECT_EQ(a.to_json(cfg).dump(), b.to_json(cfg).dump());
    EXPECT_EQ(a.trials[0].hidden_dim, 3);
    EXPECT_EQ(a.trials[0].learning_rate, 1e-4);
    double best = -2.0;
    for (const auto& t : a.trials) best = std::max(best, t.best_selection_metric);
    EXPECT_EQ(a.trials[a.selected].best_selection_metric, best);
    for (std::size_t k = 0; k < a.selected; ++k) EXPECT_LT(a.trials[k].best_selection_metric, best);
    EXPECT_EQ(a.model.hidden_dim, a.trials[a.selected].hidden_dim);
}

TEST(GridSearch, PointsAreCanonical) {
    TrainConfig cfg;
    cfg.grid.hidden_dim = {16, 8, 8};
    cfg.grid.learning_rate = {3e-4, 1e-4};
    const auto pts = grid_points(network::ModelConfig{}, cfg);
    const std::vector<std::pair<int, double>> expected{{8, 1e-4}, {8, 3e-4}, {16, 1e-4}, {16, 3e-4}};
    EXPECT_EQ(pts, expected);
    cfg.grid = {};
    EXPECT_EQ(grid_points(network::ModelConfig{}, cfg), (std::vector<std::pair<int, double>>{{8, 3e-4}}));
}
