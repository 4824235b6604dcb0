#include "bubblecast/config.hpp"

#include "bubblecast/checkpoint.hpp"
#include "bubblecast/errors.hpp"
#include "bubblecast/util.hpp"

#include <fstream>
#include <set>

namespace bubblecast {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
    if (!j.is_object()) throw ConfigError(section + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError(section + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

labeler::PsyConfig parse_psy(const json& j) {
    check_keys(j, "psy", {"min_window", "adf_lags", "significance", "mc_replications"});
    labeler::PsyConfig c;
    read(j, "min_window", c.min_window);
    read(j, "adf_lags", c.adf_lags);
    read(j, "significance", c.significance);
    read(j, "mc_replications", c.mc_replications);
    c.validate();
    return c;
}

training::TrainConfig parse_train(const json& j) {
    check_keys(j, "train", {"learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon", "weight_decay",
                            "focal_alpha", "focal_gamma", "max_epochs", "patience", "batch_size", "early_stopping",
                            "selection", "lr_bounds", "grid"});
    training::TrainConfig c;
    read(j, "learning_rate", c.learning_rate);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_epsilon", c.adam_epsilon);
    read(j, "weight_decay", c.weight_decay);
    read(j, "focal_alpha", c.focal_alpha);
    read(j, "focal_gamma", c.focal_gamma);
    read(j, "max_epochs", c.max_epochs);
    read(j, "patience", c.patience);
    read(j, "batch_size", c.batch_size);
    if (j.contains("early_stopping")) c.early_stopping = training::parse_metric(j["early_stopping"].get<std::string>());
    if (j.contains("selection")) c.selection = training::parse_metric(j["selection"].get<std::string>());
    if (j.contains("lr_bounds")) {
        const auto b = j["lr_bounds"].get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("train.lr_bounds must be [lower, upper]");
        c.lr_lower = b[0];
        c.lr_upper = b[1];
    }
    if (j.contains("grid")) {
        check_keys(j["grid"], "train.grid", {"hidden_dim", "learning_rate"});
        read(j["grid"], "hidden_dim", c.grid.hidden_dim);
        read(j["grid"], "learning_rate", c.grid.learning_rate);
    }
    c.validate();
    return c;
}

PipelineSettings parse_pipeline(const json& j) {
    check_keys(j, "pipeline",
               {"input_mode", "stride", "max_texts_per_day", "text_dim", "flat_stream", "val_frac", "test_frac"});
    PipelineSettings c;
    if (j.contains("input_mode")) c.input_mode = pipeline::parse_input_mode(j["input_mode"].get<std::string>());
    read(j, "stride", c.stride);
    read(j, "max_texts_per_day", c.max_texts_per_day);
    read(j, "text_dim", c.text_dim);
    read(j, "flat_stream", c.flat_stream);
    read(j, "val_frac", c.val_frac);
    read(j, "test_frac", c.test_frac);
    if (c.stride < 1 || c.max_texts_per_day < 1 || c.text_dim < 1) {
        throw ConfigError("pipeline: stride, max_texts_per_day and text_dim must be positive");
    }
    if (!(c.val_frac > 0.0) || !(c.test_frac > 0.0) || !(c.val_frac + c.test_frac < 1.0)) {
        throw ConfigError("pipeline: val_frac and test_frac must be positive and sum to less than 1");
    }
    return c;
}

SynthSettings parse_synth(const json& j) {
    check_keys(j, "synth", {"asset_id", "assets", "start_date", "length", "initial_price", "shock", "shock_floor",
                            "innovation_std", "episodes"});
    SynthSettings s;
    auto& c = s.series;
    read(j, "asset_id", c.asset_id);
    read(j, "assets", s.assets);
    read(j, "start_date", c.start_date);
    read(j, "length", c.length);
    read(j, "initial_price", c.initial_price);
    read(j, "shock", c.shock);
    read(j, "shock_floor", c.shock_floor);
    read(j, "innovation_std", c.innovation_std);
    if (j.contains("episodes")) {
        for (const json& e : j["episodes"]) {
            check_keys(e, "synth.episodes[]", {"start", "end", "direction"});
            labeler::Episode ep;
            ep.start = e.at("start").get<int>();
            ep.end = e.at("end").get<int>();
            const std::string dir = e.value("direction", std::string("boom"));
            if (dir == "boom") ep.direction = labeler::EpisodeDirection::boom;
            else if (dir == "burst") ep.direction = labeler::EpisodeDirection::burst;
            else throw ConfigError("synth: episode direction must be boom or burst");
            c.episodes.push_back(ep);
        }
    }
    if (s.assets < 1) throw ConfigError("synth: assets must be >= 1");
    c.validate();
    return s;
}

pipeline::PlantedConfig parse_planted(const json& j) {
    check_keys(j, "planted", {"assets", "length", "feature_dim", "bubble_length", "min_gap", "max_gap", "noise",
                              "signal_scale", "texts_per_day_max", "start_date"});
    pipeline::PlantedConfig c;
    read(j, "assets", c.assets);
    read(j, "length", c.length);
    read(j, "feature_dim", c.feature_dim);
    read(j, "bubble_length", c.bubble_length);
    read(j, "min_gap", c.min_gap);
    read(j, "max_gap", c.max_gap);
    read(j, "noise", c.noise);
    read(j, "signal_scale", c.signal_scale);
    read(j, "texts_per_day_max", c.texts_per_day_max);
    read(j, "start_date", c.start_date);
    return c;
}

PathSettings parse_paths(const json& j) {
    check_keys(j, "paths", {"prices", "features", "labels", "samples", "checkpoint", "out"});
    PathSettings p;
    read(j, "prices", p.prices);
    read(j, "features", p.features);
    read(j, "labels", p.labels);
    read(j, "samples", p.samples);
    read(j, "checkpoint", p.checkpoint);
    read(j, "out", p.out);
    return p;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t root) {
    seed = root;
    psy.rng_seed = derive_seed(root, "psy");
    train.rng_seed = derive_seed(root, "train");
    samples_seed = derive_seed(root, "samples");
    synth.series.rng_seed = derive_seed(root, "synth");
    planted.seed = derive_seed(root, "planted");
}

pipeline::SampleOptions RunConfig::sample_options() const {
    pipeline::SampleOptions o;
    o.lookback = model.lookback;
    o.lookahead = model.lookahead;
    o.stride = pipeline.stride;
    o.max_texts_per_day = pipeline.max_texts_per_day;
    o.max_bubbles = model.max_bubbles;
    o.input_mode = pipeline.input_mode;
    o.seed = samples_seed;
    return o;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    try {
        check_keys(j, "config", {"seed", "model", "train", "psy", "pipeline", "synth", "planted", "paths"});
        read(j, "seed", cfg.seed);
        if (j.contains("model")) {
            cfg.model = network::model_config_from_json(j["model"]);
            cfg.feature_dim_given = j["model"].contains("feature_dim");
        }
        if (j.contains("train")) cfg.train = parse_train(j["train"]);
        if (j.contains("psy")) cfg.psy = parse_psy(j["psy"]);
        if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j["pipeline"]);
        if (j.contains("synth")) cfg.synth = parse_synth(j["synth"]);
        if (j.contains("planted")) cfg.planted = parse_planted(j["planted"]);
        if (j.contains("paths")) cfg.paths = parse_paths(j["paths"]);
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    cfg.train.flat_stream = cfg.pipeline.flat_stream;
    cfg.planted.lookback = cfg.model.lookback;
    cfg.apply_seed(cfg.seed);
    try {
        cfg.planted.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& c) {
    json model = network::model_config_to_json(c.model);
    if (!c.feature_dim_given) model.erase("feature_dim");
    const auto& t = c.train;
    json episodes = json::array();
    for (const auto& e : c.synth.series.episodes) {
        episodes.push_back({{"start", e.start},
                            {"end", e.end},
                            {"direction", e.direction == labeler::EpisodeDirection::boom ? "boom" : "burst"}});
    }
    return json{
        {"seed", c.seed},
        {"model", model},
        {"train",
         {{"learning_rate", t.learning_rate},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon},
          {"weight_decay", t.weight_decay},
          {"focal_alpha", t.focal_alpha},
          {"focal_gamma", t.focal_gamma},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"early_stopping", training::metric_name(t.early_stopping)},
          {"selection", training::metric_name(t.selection)},
          {"lr_bounds", {t.lr_lower, t.lr_upper}},
          {"grid", {{"hidden_dim", t.grid.hidden_dim}, {"learning_rate", t.grid.learning_rate}}}}},
        {"psy",
         {{"min_window", c.psy.min_window},
          {"adf_lags", c.psy.adf_lags},
          {"significance", c.psy.significance},
          {"mc_replications", c.psy.mc_replications}}},
        {"pipeline",
         {{"input_mode", pipeline::input_mode_name(c.pipeline.input_mode)},
          {"stride", c.pipeline.stride},
          {"max_texts_per_day", c.pipeline.max_texts_per_day},
          {"text_dim", c.pipeline.text_dim},
          {"flat_stream", c.pipeline.flat_stream},
          {"val_frac", c.pipeline.val_frac},
          {"test_frac", c.pipeline.test_frac}}},
        {"synth",
         {{"asset_id", c.synth.series.asset_id},
          {"assets", c.synth.assets},
          {"start_date", c.synth.series.start_date},
          {"length", c.synth.series.length},
          {"initial_price", c.synth.series.initial_price},
          {"shock", c.synth.series.shock},
          {"shock_floor", c.synth.series.shock_floor},
          {"innovation_std", c.synth.series.innovation_std},
          {"episodes", episodes}}},
        {"planted",
         {{"assets", c.planted.assets},
          {"length", c.planted.length},
          {"feature_dim", c.planted.feature_dim},
          {"bubble_length", c.planted.bubble_length},
          {"min_gap", c.planted.min_gap},
          {"max_gap", c.planted.max_gap},
          {"noise", c.planted.noise},
          {"signal_scale", c.planted.signal_scale},
          {"texts_per_day_max", c.planted.texts_per_day_max},
          {"start_date", c.planted.start_date}}},
        {"paths",
         {{"prices", c.paths.prices},
          {"features", c.paths.features},
          {"labels", c.paths.labels},
          {"samples", c.paths.samples},
          {"checkpoint", c.paths.checkpoint},
          {"out", c.paths.out}}}};
}

}  // namespace bubblecast
