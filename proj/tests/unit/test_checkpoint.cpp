#include "bubblecast/checkpoint.hpp"
#include "bubblecast/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace bubblecast;
using namespace bubblecast::network;
using nlohmann::json;

namespace {

ModelConfig sample_config() {
    ModelConfig c;
    c.feature_dim = 4;
    c.hidden_dim = 3;
    c.lookback = 6;
    c.lookahead = 7;
    c.max_bubbles = 2;
    c.geometry_mode = GeometryMode::euclidean;
    c.nms_threshold = 1;
    c.attention_enabled = false;
    return c;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::path(::testing::TempDir()) / name;
}

}  // namespace

TEST(ModelConfigJson, RoundTrip) {
    const ModelConfig c = sample_config();
    EXPECT_EQ(model_config_from_json(model_config_to_json(c)), c);
    EXPECT_EQ(model_config_from_json(json::object()), ModelConfig{});
}

TEST(ModelConfigJson, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW((void)model_config_from_json(json{{"hidden", 3}}), DataError);
    EXPECT_THROW((void)model_config_from_json(json{{"geometry_mode", "spherical"}}), DataError);
    EXPECT_THROW((void)model_config_from_json(json{{"lookahead", 1}}), DataError);
    EXPECT_THROW((void)model_config_from_json(json{{"hidden_dim", "eight"}}), DataError);
}

TEST(GeometryModeNames, RoundTrip) {
    for (GeometryMode m : {GeometryMode::hyperbolic, GeometryMode::euclidean}) {
        EXPECT_EQ(parse_geometry_mode(geometry_mode_name(m)), m);
    }
}

TEST(Checkpoint, FileRoundTripIsBitExact) {
    const ModelConfig c = sample_config();
    const diff::ParamStore ps = init_params(c, 99);
    const auto path = temp_file("ckpt_roundtrip.json");
    save_checkpoint(path, c, ps);
    const Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.config, c);
    ASSERT_EQ(back.params.size(), ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EXPECT_EQ(back.params.entries()[i].name, ps.entries()[i].name);
        EXPECT_EQ(back.params.entries()[i].value, ps.entries()[i].value);
    }
    // Saving the reloaded model reproduces the file byte for byte.
    const auto again = temp_file("ckpt_roundtrip2.json");
    save_checkpoint(again, back.config, back.params);
    std::ifstream a(path), b(again);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, Layout) {
    const ModelConfig c = sample_config();
    const json j = checkpoint_to_json(c, init_params(c, 1));
    EXPECT_EQ(j.at("version"), 1);
    EXPECT_EQ(j.at("params").at("enc.U_z").at("shape"), json::array({3, 4}));
    EXPECT_EQ(j.at("params").at("enc.U_z").at("data").size(), 12u);
}

TEST(Checkpoint, ValidatesShapesAgainstConfig) {
    const ModelConfig c = sample_config();
    json j = checkpoint_to_json(c, init_params(c, 1));
    json bad = j;
    bad["params"]["enc.U_z"]["shape"] = {4, 3};
    EXPECT_THROW((void)checkpoint_from_json(bad), DataError);
    bad = j;
    bad["params"].erase("attn.W");
    EXPECT_THROW((void)checkpoint_from_json(bad), DataError);
    bad = j;
    bad["params"]["enc.b_z"]["data"].push_back(1.0);
    EXPECT_THROW((void)checkpoint_from_json(bad), DataError);
    bad = j;
    bad["version"] = 2;
    EXPECT_THROW((void)checkpoint_from_json(bad), DataError);
    bad = j;
    bad["config"]["hidden_dim"] = 5;
    EXPECT_THROW((void)checkpoint_from_json(bad), DataError);
    EXPECT_THROW((void)load_checkpoint(temp_file("does_not_exist.json")), DataError);
}

TEST(ConfigDigest, StableAndSensitive) {
    const ModelConfig c = sample_config();
    EXPECT_EQ(config_digest(c), config_digest(sample_config()));
    ModelConfig d = c;
    d.hidden_dim = 4;
    EXPECT_NE(config_digest(c), config_digest(d));
    EXPECT_EQ(config_digest(c).size(), 16u);
}
