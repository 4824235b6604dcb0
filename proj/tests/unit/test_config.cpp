#include "bubblecast/config.hpp"
#include "bubblecast/util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace bubblecast;
using nlohmann::json;

TEST(RunConfig, EmptyDocumentGivesDefaults) {
    const RunConfig c = run_config_from_json(json::object());
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.model, network::ModelConfig{});
    EXPECT_FALSE(c.feature_dim_given);
    EXPECT_EQ(c.pipeline.stride, 3);
    EXPECT_EQ(c.pipeline.max_texts_per_day, 15);
}

TEST(RunConfig, SeedFixesEveryStream) {
    const RunConfig a = run_config_from_json(json{{"seed", 7}});
    EXPECT_EQ(a.train.rng_seed, derive_seed(7, "train"));
    EXPECT_EQ(a.psy.rng_seed, derive_seed(7, "psy"));
    EXPECT_EQ(a.samples_seed, derive_seed(7, "samples"));
    EXPECT_EQ(a.synth.series.rng_seed, derive_seed(7, "synth"));
    EXPECT_EQ(a.planted.seed, derive_seed(7, "planted"));
    EXPECT_EQ(a.sample_options().seed, a.samples_seed);
    const RunConfig b = run_config_from_json(json{{"seed", 8}});
    EXPECT_NE(a.train.rng_seed, b.train.rng_seed);
    EXPECT_NE(a.train.rng_seed, a.psy.rng_seed);
}

TEST(RunConfig, RoundTrip) {
    const json doc = {
        {"seed", 42},
        {"model", {{"hidden_dim", 6}, {"lookback", 4}, {"lookahead", 6}, {"geometry_mode", "euclidean"}}},
        {"train", {{"learning_rate", 2e-4}, {"max_epochs", 3}, {"grid", {{"hidden_dim", {4, 8}}}}}},
        {"psy", {{"min_window", 12}, {"mc_replications", 199}}},
        {"pipeline", {{"input_mode", "price"}, {"stride", 2}}},
        {"synth", {{"length", 80}, {"episodes", {{{"start", 30}, {"end", 45}}}}}},
        {"paths", {{"prices", "p.csv"}}},
    };
    const RunConfig c = run_config_from_json(doc);
    EXPECT_EQ(c.model.hidden_dim, 6);
    EXPECT_EQ(c.model.geometry_mode, network::GeometryMode::euclidean);
    EXPECT_EQ(c.train.learning_rate, 2e-4);
    EXPECT_EQ(c.train.grid.hidden_dim, (std::vector<int>{4, 8}));
    EXPECT_EQ(c.psy.min_window, 12);
    EXPECT_EQ(c.pipeline.input_mode, pipeline::InputMode::price);
    EXPECT_EQ(c.sample_options().lookahead, 6);
    EXPECT_EQ(c.sample_options().stride, 2);
    ASSERT_EQ(c.synth.series.episodes.size(), 1u);
    EXPECT_EQ(c.paths.prices, "p.csv");

    const json out = run_config_to_json(c);
    const RunConfig back = run_config_from_json(out);
    EXPECT_EQ(run_config_to_json(back).dump(), out.dump());
    EXPECT_EQ(back.train.rng_seed, c.train.rng_seed);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW((void)run_config_from_json(json{{"sede", 1}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"train", {{"lr", 1e-4}}}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"train", {{"learning_rate", 0.1}}}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"model", {{"hidden_dim", 0}}}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"pipeline", {{"val_frac", 0.6}, {"test_frac", 0.5}}}}),
                 ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"pipeline", {{"input_mode", "audio"}}}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"psy", {{"significance", 2.0}}}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"synth", {{"episodes", {{{"start", 5}, {"end", 9}, {"direction", "up"}}}}}}}),
                 ConfigError);
    EXPECT_THROW((void)run_config_from_json(json{{"seed", "one"}}), ConfigError);
    EXPECT_THROW((void)run_config_from_json(json::array()), ConfigError);
}

TEST(RunConfig, LoadsFromFile) {
    const auto path = std::filesystem::path(::testing::TempDir()) / "run_config.json";
    {
        std::ofstream out(path);
        out << R"({"seed": 3, "model": {"feature_dim": 5}})";
    }
    const RunConfig c = load_run_config(path);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_TRUE(c.feature_dim_given);
    EXPECT_EQ(c.model.feature_dim, 5);
    {
        std::ofstream out(path);
        out << "{not json";
    }
    EXPECT_THROW((void)load_run_config(path), ConfigError);
    EXPECT_THROW((void)load_run_config(path.string() + ".missing"), ConfigError);
}
