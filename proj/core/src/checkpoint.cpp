#include "bubblecast/checkpoint.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/util.hpp"

#include <fstream>
#include <set>

namespace bubblecast::network {

using nlohmann::json;

namespace {
// Serialized parameter data is row-major.
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

std::string geometry_mode_name(GeometryMode mode) {
    return mode == GeometryMode::hyperbolic ? "hyperbolic" : "euclidean";
}

GeometryMode parse_geometry_mode(const std::string& name) {
    if (name == "hyperbolic") return GeometryMode::hyperbolic;
    if (name == "euclidean") return GeometryMode::euclidean;
    throw DataError("unknown geometry_mode '" + name + "'");
}

json model_config_to_json(const ModelConfig& cfg) {
    return json{{"feature_dim", cfg.feature_dim},
                {"hidden_dim", cfg.hidden_dim},
                {"lookback", cfg.lookback},
                {"lookahead", cfg.lookahead},
                {"max_bubbles", cfg.max_bubble_count()},
                {"geometry_mode", geometry_mode_name(cfg.geometry_mode)},
                {"nms_threshold", cfg.nms_threshold},
                {"attention", cfg.attention_enabled}};
}

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw DataError("model config must be a JSON object");
    static const std::set<std::string> known = {"feature_dim", "hidden_dim",    "lookback",
                                                "lookahead",   "max_bubbles",   "geometry_mode",
                                                "nms_threshold", "attention"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw DataError("model config: unknown key '" + key + "'");
    }
    ModelConfig cfg;
    try {
        if (j.contains("feature_dim")) cfg.feature_dim = j.at("feature_dim").get<int>();
        if (j.contains("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<int>();
        if (j.contains("lookback")) cfg.lookback = j.at("lookback").get<int>();
        if (j.contains("lookahead")) cfg.lookahead = j.at("lookahead").get<int>();
        if (j.contains("max_bubbles")) cfg.max_bubbles = j.at("max_bubbles").get<int>();
        if (j.contains("geometry_mode")) {
            cfg.geometry_mode = parse_geometry_mode(j.at("geometry_mode").get<std::string>());
        }
        if (j.contains("nms_threshold")) cfg.nms_threshold = j.at("nms_threshold").get<int>();
        if (j.contains("attention")) cfg.attention_enabled = j.at("attention").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    return cfg;
}

json checkpoint_to_json(const ModelConfig& cfg, const diff::ParamStore& params) {
    json ps = json::object();
    for (const auto& e : params.entries()) {
        const RowMajor rm = e.value;
        std::vector<double> data(rm.data(), rm.data() + rm.size());
        ps[e.name] = json{{"shape", {e.value.rows(), e.value.cols()}}, {"data", data}};
    }
    return json{{"version", kCheckpointVersion}, {"config", model_config_to_json(cfg)}, {"params", ps}};
}

Checkpoint checkpoint_from_json(const json& j) {
    if (!j.is_object() || !j.contains("version") || !j.contains("config") || !j.contains("params")) {
        throw DataError("checkpoint: expected keys version, config, params");
    }
    if (j.at("version") != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
    Checkpoint ck{model_config_from_json(j.at("config")), {}};
    // Register in canonical order so iteration order matches init_params.
    const diff::ParamStore reference = zero_params(ck.config);
    const json& ps = j.at("params");
    if (!ps.is_object()) throw DataError("checkpoint: params must be an object");
    try {
        for (const auto& ref : reference.entries()) {
            if (!ps.contains(ref.name)) throw DataError("checkpoint: missing parameter '" + ref.name + "'");
            const json& p = ps.at(ref.name);
            const auto shape = p.at("shape").get<std::vector<Eigen::Index>>();
            const auto data = p.at("data").get<std::vector<double>>();
            if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(data.size())) {
                throw DataError("checkpoint: inconsistent shape/data for '" + ref.name + "'");
            }
            diff::Tensor t = Eigen::Map<const RowMajor>(data.data(), shape[0], shape[1]);
            ck.params.add(ref.name, std::move(t));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    if (ps.size() != reference.size()) throw DataError("checkpoint: unexpected extra parameters");
    validate_params(ck.params, ck.config);
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const diff::ParamStore& params) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(cfg, params).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

std::string config_digest(const ModelConfig& cfg) {
    return hex_digest(fnv1a64(model_config_to_json(cfg).dump()));
}

}  // namespace bubblecast::network
