#pragma once

#include "bubblecast/diffcore.hpp"
#include "bubblecast/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace bubblecast::network {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    diff::ParamStore params;
};

[[nodiscard]] nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Unknown keys are rejected; absent keys keep their defaults.
[[nodiscard]] ModelConfig model_config_from_json(const nlohmann::json& j);

[[nodiscard]] std::string geometry_mode_name(GeometryMode mode);
[[nodiscard]] GeometryMode parse_geometry_mode(const std::string& name);

/// {"version":1, "config":{...}, "params":{name:{"shape":[r,c],"data":[...]}}}
[[nodiscard]] nlohmann::json checkpoint_to_json(const ModelConfig& cfg, const diff::ParamStore& params);
[[nodiscard]] Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const diff::ParamStore& params);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stable digest of the serialized model configuration.
[[nodiscard]] std::string config_digest(const ModelConfig& cfg);

}  // namespace bubblecast::network
