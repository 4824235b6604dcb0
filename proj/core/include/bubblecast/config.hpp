#pragma once

#include "bubblecast/labeler.hpp"
#include "bubblecast/network.hpp"
#include "bubblecast/pipeline.hpp"
#include "bubblecast/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace bubblecast {

/// Invalid run configuration (schema, unknown key, out-of-range value).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PipelineSettings {
    pipeline::InputMode input_mode = pipeline::InputMode::text;
    int stride = 3;
    int max_texts_per_day = 15;
    int text_dim = pipeline::kDefaultTextDim;
    bool flat_stream = false;
    double val_frac = 0.29;
    double test_frac = 0.23;
};

struct SynthSettings {
    labeler::SynthConfig series;
    int assets = 1;  ///< more than one appends a 3-digit index to asset_id
};

struct PathSettings {
    std::string prices;
    std::string features;
    std::string labels;
    std::string samples;
    std::string checkpoint;
    std::string out;
};

/**
 * The whole run in one document:
 * {"seed", "model", "train", "psy", "pipeline", "synth", "planted", "paths"}.
 * Every section is optional; unknown keys are rejected. Stage seeds are
 * derived from `seed` (see apply_seed), so one number fixes every random stream.
 */
struct RunConfig {
    std::uint64_t seed = 1;
    network::ModelConfig model;
    bool feature_dim_given = false;  ///< false: take feature_dim from the data
    training::TrainConfig train;
    labeler::PsyConfig psy;
    PipelineSettings pipeline;
    SynthSettings synth;
    pipeline::PlantedConfig planted;
    PathSettings paths;
    std::uint64_t samples_seed = 0;

    /// Derives psy, train, samples, synth and planted seeds from `seed`.
    void apply_seed(std::uint64_t root);

    [[nodiscard]] pipeline::SampleOptions sample_options() const;
};

/// Throws ConfigError. The result already has apply_seed(seed) applied.
[[nodiscard]] RunConfig run_config_from_json(const nlohmann::json& j);
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace bubblecast
