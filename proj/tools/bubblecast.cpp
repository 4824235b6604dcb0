// bubblecast: label, synth, samples, train, eval, predict.
//
// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric failure.
// Errors go to stderr as one JSON line {"error": kind, "message": text}.

#include "bubblecast/checkpoint.hpp"
#include "bubblecast/config.hpp"
#include "bubblecast/errors.hpp"
#include "bubblecast/evaluation.hpp"
#include "bubblecast/labeler.hpp"
#include "bubblecast/network.hpp"
#include "bubblecast/pipeline.hpp"
#include "bubblecast/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace bubblecast;
using nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string prices, features, labels, samples, checkpoint, out;
    // command specific
    std::string split = "test";
    std::string predictions;
    std::string features_out, labels_out, manifest_out;
    bool planted = false;
    bool timing = false;
    bool em_day_formula = false;
};

void report_error(const char* kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

void warn(const json& j) { std::cerr << j.dump() << std::endl; }

RunConfig resolve(const Flags& f) {
    RunConfig cfg = f.config.empty() ? run_config_from_json(json::object()) : load_run_config(f.config);
    if (f.seed) cfg.apply_seed(*f.seed);
    auto pick = [](const std::string& flag, std::string& slot) {
        if (!flag.empty()) slot = flag;
    };
    pick(f.prices, cfg.paths.prices);
    pick(f.features, cfg.paths.features);
    pick(f.labels, cfg.paths.labels);
    pick(f.samples, cfg.paths.samples);
    pick(f.checkpoint, cfg.paths.checkpoint);
    pick(f.out, cfg.paths.out);
    return cfg;
}

const std::string& need(const std::string& path, const char* flag) {
    if (path.empty()) throw UsageError(std::string("missing required path ") + flag);
    return path;
}

// Writes through a temporary file so a failed run never leaves a partial artifact.
void write_file(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        std::cout.flush();
        return;
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path);
        out << content;
        if (!out) throw DataError("write failed for " + path);
    }
    std::filesystem::rename(tmp, path);
}

template <typename Fn>
std::string render(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

// ---------------------------------------------------------------------------

int cmd_label(const Flags& f) {
    const RunConfig cfg = resolve(f);
    const auto frames = pipeline::load_prices(need(cfg.paths.prices, "--prices"));
    if (frames.empty()) throw DataError("price file holds no rows");
    auto cache = labeler::CriticalValueCache::from_environment();
    std::vector<pipeline::AssetLabels> out;
    for (const auto& frame : frames) {
        try {
            out.push_back(pipeline::to_date_spans(frame, labeler::psy_label(frame, cfg.psy, &cache)));
        } catch (const DataError& e) {
            warn({{"warning", "asset_skipped"}, {"asset", frame.asset_id}, {"message", e.what()}});
        }
    }
    if (out.empty()) throw DataError("no asset could be labeled");
    write_file(cfg.paths.out, render([&](std::ostream& os) { pipeline::write_labels(os, out); }));
    return kOk;
}

int cmd_synth(const Flags& f) {
    RunConfig cfg = resolve(f);
    if (f.planted) {
        const auto data = pipeline::synth_planted_dataset(cfg.planted);
        write_file(cfg.paths.out, render([&](std::ostream& os) { pipeline::write_prices(os, data.frames); }));
        write_file(need(f.features_out.empty() ? cfg.paths.features : f.features_out, "--features-out"),
                   render([&](std::ostream& os) { pipeline::write_text_features(os, data.features); }));
        write_file(need(f.labels_out.empty() ? cfg.paths.labels : f.labels_out, "--labels-out"),
                   render([&](std::ostream& os) { pipeline::write_labels(os, data.labels); }));
        return kOk;
    }
    std::vector<labeler::SeriesFrame> frames;
    for (int a = 0; a < cfg.synth.assets; ++a) {
        labeler::SynthConfig sc = cfg.synth.series;
        if (cfg.synth.assets > 1) {
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "%03d", a);
            sc.asset_id += suffix;
            sc.rng_seed = cfg.synth.series.rng_seed + static_cast<std::uint64_t>(a);
        }
        frames.push_back(labeler::synth_series(sc));
    }
    write_file(cfg.paths.out, render([&](std::ostream& os) { pipeline::write_prices(os, frames); }));
    return kOk;
}

std::vector<pipeline::Sample> build_samples(const RunConfig& cfg, pipeline::SampleStats& stats) {
    const auto frames = pipeline::load_prices(need(cfg.paths.prices, "--prices"));
    std::vector<pipeline::TextFeatureRecord> features;
    if (cfg.pipeline.input_mode != pipeline::InputMode::price) {
        features = pipeline::load_text_features(need(cfg.paths.features, "--features"), cfg.pipeline.text_dim);
    }
    std::vector<pipeline::AssetLabels> labels;
    if (!cfg.paths.labels.empty()) {
        labels = pipeline::load_labels(cfg.paths.labels);
    } else {
        auto cache = labeler::CriticalValueCache::from_environment();
        for (const auto& frame : frames) {
            try {
                labels.push_back(pipeline::to_date_spans(frame, labeler::psy_label(frame, cfg.psy, &cache)));
            } catch (const DataError& e) {
                warn({{"warning", "asset_unlabeled"}, {"asset", frame.asset_id}, {"message", e.what()}});
            }
        }
    }
    return pipeline::make_samples(frames, features, labels, cfg.sample_options(), &stats);
}

json stats_json(const pipeline::SampleStats& s) {
    return {{"windows", s.windows},
            {"emitted", s.emitted},
            {"dropped_missing_features", s.dropped_missing_features},
            {"subsampled_days", s.subsampled_days},
            {"dropped_short_spans", s.dropped_short_spans},
            {"clamped_counts", s.clamped_counts},
            {"assets_without_prices", s.assets_without_prices}};
}

pipeline::SamplesHeader header_for(const RunConfig& cfg, int feature_dim) {
    pipeline::SamplesHeader h;
    h.feature_dim = feature_dim;
    h.lookback = cfg.model.lookback;
    h.lookahead = cfg.model.lookahead;
    h.max_bubbles = cfg.model.max_bubble_count();
    h.input_mode = cfg.pipeline.input_mode;
    return h;
}

int feature_dim_of(const RunConfig& cfg) {
    switch (cfg.pipeline.input_mode) {
        case pipeline::InputMode::price: return 3;
        case pipeline::InputMode::text: return cfg.pipeline.text_dim;
        case pipeline::InputMode::price_text: return 3 + cfg.pipeline.text_dim;
    }
    return cfg.pipeline.text_dim;
}

int cmd_samples(const Flags& f) {
    const RunConfig cfg = resolve(f);
    const std::string& out = need(cfg.paths.out, "--out");
    pipeline::SampleStats stats;
    auto samples = build_samples(cfg, stats);
    if (stats.clamped_counts > 0) {
        warn({{"warning", "counts_clamped"}, {"samples", stats.clamped_counts}});
    }
    const auto split = pipeline::split_chronological(std::move(samples), cfg.pipeline.val_frac, cfg.pipeline.test_frac);
    const auto header = header_for(cfg, feature_dim_of(cfg));
    write_file(out, render([&](std::ostream& os) { pipeline::write_samples(os, header, split); }));
    json manifest = split.manifest();
    manifest["samples_file"] = std::filesystem::path(out).filename().string();
    manifest["stats"] = stats_json(stats);
    manifest["seed"] = cfg.seed;
    write_file(f.manifest_out.empty() ? out + ".manifest.json" : f.manifest_out, manifest.dump(2) + "\n");
    return kOk;
}

network::ModelConfig model_for(const RunConfig& cfg, const pipeline::SamplesHeader& h) {
    network::ModelConfig m = cfg.model;
    if (cfg.feature_dim_given && m.feature_dim != h.feature_dim) {
        throw DataError("config feature_dim " + std::to_string(m.feature_dim) + " does not match samples (" +
                        std::to_string(h.feature_dim) + ")");
    }
    m.feature_dim = h.feature_dim;
    if (m.lookback != h.lookback || m.lookahead != h.lookahead) {
        throw DataError("config lookback/lookahead do not match the samples file");
    }
    if (m.max_bubble_count() != h.max_bubbles) throw DataError("config max_bubbles does not match the samples file");
    m.validate();
    return m;
}

int cmd_train(const Flags& f) {
    const RunConfig cfg = resolve(f);
    const std::string& ckpt = need(cfg.paths.checkpoint, "--checkpoint");
    const auto file = pipeline::load_samples(need(cfg.paths.samples, "--samples"));
    const network::ModelConfig model = model_for(cfg, file.header);
    const training::GridResult grid = training::grid_search(file.split, model, cfg.train);
    network::save_checkpoint(ckpt, grid.model, grid.params);
    json report = grid.to_json(cfg.train, f.timing);
    report["checkpoint"] = std::filesystem::path(ckpt).filename().string();
    report["config_digest"] = network::config_digest(grid.model);
    report["model"] = network::model_config_to_json(grid.model);
    report["seed"] = cfg.seed;
    write_file(cfg.paths.out.empty() ? ckpt + ".report.json" : cfg.paths.out, report.dump(2) + "\n");
    return kOk;
}

std::vector<pipeline::Sample> eval_samples(const RunConfig& cfg, const Flags& f, std::string& digest_source) {
    if (!cfg.paths.samples.empty()) {
        const auto file = pipeline::load_samples(cfg.paths.samples);
        digest_source = "samples";
        return pipeline::select_split(file.split, f.split);
    }
    // Raw dataset files: window them and score every sample.
    pipeline::SampleStats stats;
    digest_source = "raw";
    return build_samples(cfg, stats);
}

std::map<std::pair<std::string, std::string>, evaluation::Prediction> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::map<std::pair<std::string, std::string>, evaluation::Prediction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            evaluation::Prediction p;
            for (const json& s : j.at("spans")) p.spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
            p.count = j.contains("count") ? j["count"].get<int>() : static_cast<int>(p.spans.size());
            out[{j.at("asset").get<std::string>(), j.at("window_start_date").get<std::string>()}] = std::move(p);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

int cmd_eval(const Flags& f) {
    const RunConfig cfg = resolve(f);
    std::string source;
    const auto samples = eval_samples(cfg, f, source);
    if (samples.empty()) throw DataError("no samples to evaluate");
    evaluation::MetricsReport report;
    if (!f.predictions.empty()) {
        const auto table = load_predictions(f.predictions);
        std::vector<evaluation::Prediction> preds;
        for (const auto& s : samples) {
            auto it = table.find({s.asset_id, s.window_start_date});
            if (it == table.end()) {
                throw DataError("no prediction for sample " + s.asset_id + "@" + s.window_start_date);
            }
            preds.push_back(it->second);
        }
        const network::ModelConfig m = cfg.model;
        report = evaluation::score(preds, samples, m.count_classes());
        report.config_digest = network::config_digest(m);
    } else {
        const auto ck = network::load_checkpoint(need(cfg.paths.checkpoint, "--checkpoint"));
        report = evaluation::evaluate(ck.params, ck.config, samples, cfg.pipeline.flat_stream);
    }
    write_file(cfg.paths.out, report.to_json(f.em_day_formula).dump(2) + "\n");
    return kOk;
}

int cmd_predict(const Flags& f) {
    const RunConfig cfg = resolve(f);
    const auto ck = network::load_checkpoint(need(cfg.paths.checkpoint, "--checkpoint"));
    std::string source;
    const auto samples = eval_samples(cfg, f, source);
    evaluation::check_compatible(ck.config, samples);
    std::ostringstream os;
    for (const auto& s : samples) {
        const auto fr = network::forward(s.sequence(cfg.pipeline.flat_stream), ck.params, ck.config);
        json spans = json::array(), dates = json::array();
        for (const auto& sp : fr.extracted) {
            spans.push_back({sp.start, sp.end});
            if (static_cast<int>(s.lookahead_dates.size()) == s.lookahead()) {
                dates.push_back({{"start_date", s.lookahead_dates[static_cast<std::size_t>(sp.start) - 1]},
                                 {"end_date", s.lookahead_dates[static_cast<std::size_t>(sp.end) - 1]}});
            }
        }
        auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        os << json{{"asset", s.asset_id},
                   {"window_start_date", s.window_start_date},
                   {"lookahead_start_date", s.lookahead_start_date},
                   {"count", fr.count.count},
                   {"count_probs", vec(fr.count.probs)},
                   {"p_start", vec(fr.spans.p_start)},
                   {"p_end", vec(fr.spans.p_end)},
                   {"spans", spans},
                   {"span_dates", dates}}
                  .dump()
           << '\n';
    }
    write_file(cfg.paths.out, os.str());
    return kOk;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "RunConfig JSON document");
    cmd->add_option("--seed", f.seed, "root seed; overrides the config");
    cmd->add_option("--prices", f.prices, "prices CSV (asset_id,date,open,high,low,close)");
    cmd->add_option("--features", f.features, "text features JSONL");
    cmd->add_option("--labels", f.labels, "bubble labels JSONL");
    cmd->add_option("--samples", f.samples, "samples JSONL");
    cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint JSON");
    cmd->add_option("--out", f.out, "output path ('-' or absent: stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bubblecast: multi-span bubble forecasting with a hyperbolic GRU"};
    app.require_subcommand(1);
    Flags f;

    auto* label = app.add_subcommand("label", "label bubbles in price series (BSADF)");
    add_common(label, f);
    auto* synth = app.add_subcommand("synth", "generate synthetic price series");
    add_common(synth, f);
    synth->add_flag("--planted", f.planted, "generate the planted-signal dataset (prices, features, labels)");
    synth->add_option("--features-out", f.features_out, "planted: features JSONL output");
    synth->add_option("--labels-out", f.labels_out, "planted: labels JSONL output");
    auto* samples = app.add_subcommand("samples", "window series into samples and split them chronologically");
    add_common(samples, f);
    samples->add_option("--manifest-out", f.manifest_out, "split manifest (default: <out>.manifest.json)");
    auto* train = app.add_subcommand("train", "grid search and training");
    add_common(train, f);
    train->add_flag("--timing", f.timing, "include wall-clock seconds in the report");
    auto* eval = app.add_subcommand("eval", "compute span and count metrics");
    add_common(eval, f);
    eval->add_option("--split", f.split, "train, validation, test or all")->capture_default_str();
    eval->add_option("--predictions", f.predictions, "score a predictions JSONL instead of a checkpoint");
    eval->add_flag("--em-day-formula", f.em_day_formula, "also report the day-level (tp+fp)/total EM variant");
    auto* predict = app.add_subcommand("predict", "predict spans and counts per sample");
    add_common(predict, f);
    predict->add_option("--split", f.split, "train, validation, test or all")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        report_error("usage", e.what());
        return kUsage;
    }

    try {
        if (label->parsed()) return cmd_label(f);
        if (synth->parsed()) return cmd_synth(f);
        if (samples->parsed()) return cmd_samples(f);
        if (train->parsed()) return cmd_train(f);
        if (eval->parsed()) return cmd_eval(f);
        if (predict->parsed()) return cmd_predict(f);
    } catch (const UsageError& e) {
        report_error("usage", e.what());
        return kUsage;
    } catch (const ConfigError& e) {
        report_error("config", e.what());
        return kUsage;
    } catch (const NumericError& e) {
        report_error("numeric", e.what());
        return kNumeric;
    } catch (const std::exception& e) {
        report_error("data", e.what());
        return kData;
    }
    return kUsage;
}
