#pragma once

#include "bubblecast/span.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bubblecast::labeler {

/// Daily prices of one asset. Dates are ISO-8601 and strictly increasing.
struct SeriesFrame {
    std::string asset_id;
    std::vector<std::string> dates;
    std::vector<double> close;
    std::vector<double> high;
    std::vector<double> low;

    [[nodiscard]] std::size_t size() const noexcept { return dates.size(); }

    /// Throws DataError on unequal lengths, unordered dates or non-positive prices.
    void validate() const;
};

struct PsyConfig {
    int min_window = 0;  ///< 0 selects the rule round(n (0.01 + 1.8 / sqrt(n))), floored at 10
    int adf_lags = 0;
    double significance = 0.05;
    int mc_replications = 199;
    std::uint64_t rng_seed = 20150101;

    /// Minimum window for a series of n observations.
    [[nodiscard]] int window_for(std::size_t n) const;

    void validate() const;
};

[[nodiscard]] int default_min_window(std::size_t n);

/**
 * Right-tailed ADF statistic: the t-ratio of delta in
 *   dy_t = alpha + delta y_{t-1} + sum_{i=1..lags} phi_i dy_{t-i} + e_t
 * fitted by OLS on the whole of `logp`.
 * Throws std::invalid_argument when the series is too short for a positive
 * residual degree of freedom and NumericError when the regression is singular
 * (e.g. a constant series). An exact fit returns 0 when delta vanishes and
 * +/-inf otherwise.
 */
[[nodiscard]] double adf_stat(std::span<const double> logp, int lags);

/**
 * Backward sup-ADF sequence. Entry t-1 (day t, 1-based) holds
 * max over r in [1, t - w0 + 1] of adf_stat(logp[r..t]) for t >= w0, NaN before.
 * Windows whose regression is degenerate are skipped; if every window ending
 * at t is degenerate the entry is NaN.
 */
[[nodiscard]] std::vector<double> bsadf_sequence(std::span<const double> logp, const PsyConfig& cfg);

/**
 * Monte Carlo critical values and their on-disk cache. The cache key digests
 * (n, w0, lags, significance, replications, seed); each key is a JSON file in
 * the cache directory. Reads may run concurrently; writes are serialized and
 * published by atomic rename.
 */
class CriticalValueCache {
public:
    /// Memory-only cache.
    CriticalValueCache() = default;
    explicit CriticalValueCache(std::filesystem::path directory);

    /// Directory from BUBBLECAST_CACHE_DIR, memory-only when unset.
    [[nodiscard]] static CriticalValueCache from_environment();

    [[nodiscard]] std::vector<double> get_or_compute(std::size_t n, const PsyConfig& cfg);

    [[nodiscard]] static std::string key_digest(std::size_t n, const PsyConfig& cfg);

    [[nodiscard]] const std::optional<std::filesystem::path>& directory() const { return dir_; }

private:
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, std::vector<double>> memory_;
    std::mutex mutex_;
};

/**
 * Per-day (1 - significance) quantiles of BSADF_t over mc_replications
 * driftless Gaussian random walks of length n. NaN before the minimum window.
 * Uncached; see CriticalValueCache.
 */
[[nodiscard]] std::vector<double> simulate_critical_values(std::size_t n, const PsyConfig& cfg);

[[nodiscard]] std::vector<double> critical_values(std::size_t n, const PsyConfig& cfg,
                                                  CriticalValueCache* cache = nullptr);

/**
 * Bubble spans (1-based row indices, inclusive) of maximal runs of at least
 * two consecutive days where BSADF_t exceeds its critical value, computed on
 * log closing prices. Throws DataError when the series is shorter than w0 + 5.
 */
[[nodiscard]] SpanList psy_label(const SeriesFrame& series, const PsyConfig& cfg,
                                 CriticalValueCache* cache = nullptr);

/// Same as psy_label, reusing precomputed critical values for the series length.
[[nodiscard]] SpanList psy_label_with(const SeriesFrame& series, const PsyConfig& cfg,
                                      std::span<const double> critical);

enum class EpisodeDirection { boom, burst };

struct Episode {
    int start = 1;  ///< 1-based day, inclusive
    int end = 1;
    EpisodeDirection direction = EpisodeDirection::boom;
};

struct SynthConfig {
    std::string asset_id = "SYN";
    std::string start_date = "2020-01-01";
    int length = 120;
    double initial_price = 100.0;
    double shock = 0.05;          ///< L
    double shock_floor = 0.05;    ///< epsilon_b; b_t ~ Uniform(-epsilon_b, 1)
    double innovation_std = 0.01; ///< sigma
    std::vector<Episode> episodes;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

/**
 * Log-price increments follow +L_t + eps_t inside booms, -L_t + eps_t inside
 * bursts and eps_t elsewhere, with L_t = L b_t. High and low are
 * close (1 +/- |N(0, sigma)|). Dates are consecutive calendar days.
 */
[[nodiscard]] SeriesFrame synth_series(const SynthConfig& cfg);

}  // namespace bubblecast::labeler
