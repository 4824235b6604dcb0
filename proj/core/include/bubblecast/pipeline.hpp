#pragma once

#include "bubblecast/labeler.hpp"
#include "bubblecast/span.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bubblecast::pipeline {

using labeler::SeriesFrame;
using Vector = Eigen::VectorXd;

inline constexpr int kDefaultTextDim = 64;

struct TextFeatureRecord {
    std::string asset_id;
    std::string date;
    Vector vector;
};

/// Inclusive calendar range of a labeled bubble.
struct DateSpan {
    std::string start_date;
    std::string end_date;

    friend bool operator==(const DateSpan&, const DateSpan&) = default;
};

struct AssetLabels {
    std::string asset_id;
    std::vector<DateSpan> spans;
};

// ---------------------------------------------------------------------------
// Files

/**
 * CSV with header asset_id,date,open,high,low,close. Returns one frame per
 * asset (sorted by asset id), rows sorted by date. Throws DataError naming the
 * line for malformed rows, non-positive prices and duplicate (asset, date).
 */
[[nodiscard]] std::vector<SeriesFrame> load_prices(const std::filesystem::path& path);
[[nodiscard]] std::vector<SeriesFrame> read_prices(std::istream& in, const std::string& source = "<input>");

/// Writes the same CSV layout; open is the previous close (the first row uses its own close).
void write_prices(std::ostream& out, std::span<const SeriesFrame> frames);

/**
 * Hashing featurizer for raw text: lowercase, split on anything that is not a
 * letter or digit, hash each token into `dim` buckets (FNV-1a), count, then
 * scale by 1 / sqrt(1 + tokens).
 */
[[nodiscard]] Vector featurize_text(std::string_view text, int dim = kDefaultTextDim);

/**
 * JSON lines, {"asset", "date", "vector": [...]} or {"asset", "date", "text"}.
 * Text records go through featurize_text(expected_dim). Throws DataError naming
 * the line on parse errors, bad dates, non-finite values or a wrong dimension.
 */
[[nodiscard]] std::vector<TextFeatureRecord> load_text_features(const std::filesystem::path& path,
                                                                int expected_dim);
[[nodiscard]] std::vector<TextFeatureRecord> read_text_features(std::istream& in, int expected_dim,
                                                                const std::string& source = "<input>");
void write_text_features(std::ostream& out, std::span<const TextFeatureRecord> records);

/// Label file: JSON lines {"asset", "spans": [{"start_date", "end_date"}]}.
[[nodiscard]] std::vector<AssetLabels> load_labels(const std::filesystem::path& path);
[[nodiscard]] std::vector<AssetLabels> read_labels(std::istream& in, const std::string& source = "<input>");
void write_labels(std::ostream& out, std::span<const AssetLabels> labels);

/// Row spans of a labeled series converted to dates.
[[nodiscard]] AssetLabels to_date_spans(const SeriesFrame& frame, const SpanList& spans);

// ---------------------------------------------------------------------------
// Samples

enum class InputMode { price, text, price_text };

[[nodiscard]] std::string input_mode_name(InputMode mode);
[[nodiscard]] InputMode parse_input_mode(const std::string& name);

struct Sample {
    std::string asset_id;
    std::string window_start_date;     ///< first lookback day
    std::string lookahead_start_date;  ///< first predicted day
    std::string window_end_date;       ///< last predicted day
    std::vector<std::string> lookahead_dates;
    std::vector<std::vector<Vector>> lookback_features;  ///< tau days, each a non-empty list
    std::vector<int> lookahead_labels;                   ///< length T
    SpanList true_spans;                                 ///< 1-based within the lookahead
    int true_count = 0;

    [[nodiscard]] int lookback() const noexcept { return static_cast<int>(lookback_features.size()); }
    [[nodiscard]] int lookahead() const noexcept { return static_cast<int>(lookahead_labels.size()); }
    [[nodiscard]] int feature_dim() const;

    /// Encoder input: one averaged vector per day, or every record in order when flat.
    [[nodiscard]] std::vector<Vector> sequence(bool flat_stream = false) const;

    /// Throws DataError when the type invariants do not hold for B_max.
    void validate(int max_bubbles) const;
};

struct SampleOptions {
    int lookback = 5;
    int lookahead = 5;
    int stride = 3;
    int max_texts_per_day = 15;
    int max_bubbles = -1;  ///< negative selects floor(T / 2)
    InputMode input_mode = InputMode::text;
    std::uint64_t seed = 0;

    [[nodiscard]] int max_bubble_count() const noexcept { return max_bubbles < 0 ? lookahead / 2 : max_bubbles; }
    void validate() const;
};

struct SampleStats {
    std::size_t windows = 0;
    std::size_t emitted = 0;
    std::size_t dropped_missing_features = 0;
    std::size_t subsampled_days = 0;
    std::size_t dropped_short_spans = 0;  ///< clipped spans left with a single day
    std::size_t clamped_counts = 0;       ///< samples whose span count exceeded B_max
    std::vector<std::string> assets_without_prices;
};

/**
 * Sliding windows over each asset's price calendar. A window needs
 * lookback + lookahead price days; it is kept only when every lookback day has
 * at least one feature record (text modes). Days with more than
 * max_texts_per_day records are subsampled with a seed derived from
 * (seed, asset, date). Labels are the asset's spans clipped to the lookahead
 * and re-indexed from 1. Assets are processed in id order.
 */
[[nodiscard]] std::vector<Sample> make_samples(std::span<const SeriesFrame> frames,
                                               std::span<const TextFeatureRecord> features,
                                               std::span<const AssetLabels> labels,
                                               const SampleOptions& opts, SampleStats* stats = nullptr);

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> test;
    std::string validation_start_date;
    std::string test_start_date;
    std::size_t purged = 0;  ///< samples dropped because their window reached into the next split

    [[nodiscard]] nlohmann::json manifest() const;
};

/**
 * Chronological split. Samples are ordered by (window_start_date, asset);
 * validation and test receive round(n * frac) samples, each cut moved to the
 * nearest date boundary. Earlier-split samples whose window_end_date is on or
 * after the next split's first start date are purged. Throws DataError when
 * there are too few distinct dates for three non-empty parts.
 */
[[nodiscard]] DatasetSplit split_chronological(std::vector<Sample> samples, double val_frac,
                                               double test_frac);

// ---------------------------------------------------------------------------
// Samples file: a header line then one sample per line, each tagged with its split.

struct SamplesHeader {
    int version = 1;
    int feature_dim = 0;
    int lookback = 0;
    int lookahead = 0;
    int max_bubbles = 0;
    InputMode input_mode = InputMode::text;
};

struct SamplesFile {
    SamplesHeader header;
    DatasetSplit split;
};

[[nodiscard]] nlohmann::json sample_to_json(const Sample& s);
[[nodiscard]] Sample sample_from_json(const nlohmann::json& j);

void write_samples(std::ostream& out, const SamplesHeader& header, const DatasetSplit& split);
[[nodiscard]] SamplesFile read_samples(std::istream& in, const std::string& source = "<input>");
[[nodiscard]] SamplesFile load_samples(const std::filesystem::path& path);

/// Samples of one split by name: "train", "validation", "test" or "all".
[[nodiscard]] std::vector<Sample> select_split(const DatasetSplit& split, const std::string& name);

// ---------------------------------------------------------------------------
// Planted synthetic dataset: a signal record on day d announces a boom on
// days d + lookback .. d + lookback + bubble_length - 1. Bubble days carry a
// record marking how far into the bubble they are.

struct PlantedConfig {
    int assets = 64;
    int length = 100;
    int feature_dim = 8;
    int lookback = 5;
    int bubble_length = 4;
    int min_gap = 12;  ///< quiet days between the end of one bubble and the next signal
    int max_gap = 18;
    double noise = 0.1;
    double signal_scale = 1.0;
    int texts_per_day_max = 3;
    std::string start_date = "2021-01-01";
    std::uint64_t seed = 7;

    void validate() const;
};

struct PlantedDataset {
    std::vector<SeriesFrame> frames;
    std::vector<TextFeatureRecord> features;
    std::vector<AssetLabels> labels;
};

[[nodiscard]] PlantedDataset synth_planted_dataset(const PlantedConfig& cfg);

}  // namespace bubblecast::pipeline
