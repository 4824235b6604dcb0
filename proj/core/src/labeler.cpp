#include "bubblecast/labeler.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/util.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace bubblecast::labeler {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxRegressors = 16;

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxRegressors,
                                  kMaxRegressors>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxRegressors, 1>;

// Regressor layout: [y_{j-1} - ref, 1, dy_{j-1}, ..., dy_{j-lags}].
void fill_row(std::span<const double> y, std::size_t j, int lags, double ref, double* row) {
    row[0] = y[j - 1] - ref;
    row[1] = 1.0;
    for (int i = 1; i <= lags; ++i) row[1 + i] = y[j - i] - y[j - i - 1];
}

// An exact fit has no residual variance: report 0 when the level coefficient
// vanishes and an infinite statistic of its sign otherwise.
double exact_fit_stat(double delta, double level_ss, double dy_ss) {
    if (std::abs(delta) * std::sqrt(level_ss) <= 1e-8 * std::sqrt(dy_ss)) return 0.0;
    return delta > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
}

// t-ratio of the level coefficient from accumulated normal equations; nullopt if degenerate.
std::optional<double> t_ratio(const SmallMatrix& xtx, const SmallVector& xty, double yty,
                              std::size_t obs) {
    const Eigen::Index k = xtx.rows();
    if (obs <= static_cast<std::size_t>(k)) return std::nullopt;
    Eigen::LLT<SmallMatrix> llt(xtx);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const SmallMatrix l = llt.matrixL();
    for (Eigen::Index i = 0; i < k; ++i) {
        const double pivot = l(i, i) * l(i, i);
        if (!(pivot > 1e-12 * xtx(i, i)) || xtx(i, i) <= 0.0) return std::nullopt;
    }
    const SmallVector beta = llt.solve(xty);
    const double ssr = yty - beta.dot(xty);
    if (!(ssr > 1e-12 * yty)) return exact_fit_stat(beta(0), xtx(0, 0), yty);
    SmallVector unit = SmallVector::Zero(k);
    unit(0) = 1.0;
    const double inv00 = llt.solve(unit)(0);
    const double s2 = ssr / static_cast<double>(obs - static_cast<std::size_t>(k));
    const double se = std::sqrt(s2 * inv00);
    if (!(se > 0.0) || !std::isfinite(se)) return std::nullopt;
    return beta(0) / se;
}

double quantile_type7(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

}  // namespace

// ---------------------------------------------------------------------------

void SeriesFrame::validate() const {
    const std::size_t n = dates.size();
    if (close.size() != n || high.size() != n || low.size() != n) {
        throw DataError("series " + asset_id + ": column lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!parse_iso_day(dates[i])) throw DataError("series " + asset_id + ": invalid date '" + dates[i] + "'");
        if (i > 0 && !(dates[i - 1] < dates[i])) {
            throw DataError("series " + asset_id + ": dates not strictly increasing at " + dates[i]);
        }
        if (!(close[i] > 0.0) || !(high[i] > 0.0) || !(low[i] > 0.0) || !std::isfinite(close[i]) ||
            !std::isfinite(high[i]) || !std::isfinite(low[i])) {
            throw DataError("series " + asset_id + ": non-positive price on " + dates[i]);
        }
    }
}

int default_min_window(std::size_t n) {
    const double nn = static_cast<double>(n);
    const int w = static_cast<int>(std::lround(nn * (0.01 + 1.8 / std::sqrt(nn))));
    return std::max(w, 10);
}

int PsyConfig::window_for(std::size_t n) const {
    return min_window > 0 ? min_window : default_min_window(n);
}

void PsyConfig::validate() const {
    if (min_window != 0 && min_window < 10) throw std::invalid_argument("psy: min_window must be >= 10");
    if (adf_lags < 0 || adf_lags > kMaxRegressors - 2) throw std::invalid_argument("psy: adf_lags out of range");
    if (!(significance > 0.0 && significance < 1.0)) {
        throw std::invalid_argument("psy: significance must lie in (0, 1)");
    }
    if (mc_replications < 99) throw std::invalid_argument("psy: mc_replications must be >= 99");
}

double adf_stat(std::span<const double> logp, int lags) {
    if (lags < 0 || lags > kMaxRegressors - 2) throw std::invalid_argument("adf_stat: invalid lag count");
    const std::size_t n = logp.size();
    const std::size_t k = 2 + static_cast<std::size_t>(lags);
    const std::size_t first = 1 + static_cast<std::size_t>(lags);
    if (n < static_cast<std::size_t>(lags) + 4 || n < first + k + 1) {
        throw std::invalid_argument("adf_stat: series too short for " + std::to_string(lags) + " lags");
    }
    for (double v : logp) {
        if (!std::isfinite(v)) throw std::invalid_argument("adf_stat: non-finite observation");
    }
    const std::size_t obs = n - first;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(k));
    Eigen::VectorXd dy(static_cast<Eigen::Index>(obs));
    std::vector<double> row(k);
    for (std::size_t j = first; j < n; ++j) {
        fill_row(logp, j, lags, logp[0], row.data());
        const auto r = static_cast<Eigen::Index>(j - first);
        for (std::size_t c = 0; c < k; ++c) x(r, static_cast<Eigen::Index>(c)) = row[c];
        dy(r) = logp[j] - logp[j - 1];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(k)) throw NumericError("adf_stat: singular regression");
    const Eigen::VectorXd beta = qr.solve(dy);
    const Eigen::VectorXd resid = dy - x * beta;
    const double ssr = resid.squaredNorm();
    if (!(ssr > 1e-12 * dy.squaredNorm())) {
        return exact_fit_stat(beta(0), x.col(0).squaredNorm(), dy.squaredNorm());
    }
    const double s2 = ssr / static_cast<double>(obs - k);
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const double inv00 = xtx.ldlt().solve(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(k), 0))(0);
    return beta(0) / std::sqrt(s2 * inv00);
}

std::vector<double> bsadf_sequence(std::span<const double> logp, const PsyConfig& cfg) {
    cfg.validate();
    const std::size_t n = logp.size();
    const int w0 = cfg.window_for(n);
    if (n < static_cast<std::size_t>(w0)) {
        throw std::invalid_argument("bsadf_sequence: series shorter than the minimum window");
    }
    for (double v : logp) {
        if (!std::isfinite(v)) throw std::invalid_argument("bsadf_sequence: non-finite observation");
    }
    const int lags = cfg.adf_lags;
    const auto k = static_cast<Eigen::Index>(2 + lags);
    const double ref = logp[0];
    std::vector<double> out(n, kNaN);
    double row[kMaxRegressors];

    // Window logp[a..b] (0-based, inclusive) uses observations j in [a + 1 + lags, b].
    for (std::size_t b = static_cast<std::size_t>(w0) - 1; b < n; ++b) {
        SmallMatrix xtx = SmallMatrix::Zero(k, k);
        SmallVector xty = SmallVector::Zero(k);
        double yty = 0.0;
        std::size_t obs = 0;
        auto add_row = [&](std::size_t j) {
            fill_row(logp, j, lags, ref, row);
            const double dy = logp[j] - logp[j - 1];
            for (Eigen::Index r = 0; r < k; ++r) {
                xty(r) += row[r] * dy;
                for (Eigen::Index c = 0; c < k; ++c) xtx(r, c) += row[r] * row[c];
            }
            yty += dy * dy;
            ++obs;
        };
        const std::size_t a_max = b + 1 - static_cast<std::size_t>(w0);
        for (std::size_t j = a_max + 1 + static_cast<std::size_t>(lags); j <= b; ++j) add_row(j);

        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = a_max + 1; a-- > 0;) {
            if (a != a_max) add_row(a + 1 + static_cast<std::size_t>(lags));
            if (auto t = t_ratio(xtx, xty, yty, obs)) best = std::max(best, *t);
        }
        if (std::isfinite(best)) out[b] = best;
    }
    return out;
}

std::vector<double> simulate_critical_values(std::size_t n, const PsyConfig& cfg) {
    cfg.validate();
    const int w0 = cfg.window_for(n);
    if (n < static_cast<std::size_t>(w0)) {
        throw std::invalid_argument("critical_values: n shorter than the minimum window");
    }
    const auto reps = static_cast<std::size_t>(cfg.mc_replications);
    std::vector<std::vector<double>> per_day(n);
    std::vector<double> walk(n);
    for (std::size_t rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng(mix64(cfg.rng_seed ^ mix64(rep + 1)));
        std::normal_distribution<double> normal(0.0, 1.0);
        walk[0] = 0.0;
        for (std::size_t t = 1; t < n; ++t) walk[t] = walk[t - 1] + normal(rng);
        const std::vector<double> stats = bsadf_sequence(walk, cfg);
        for (std::size_t t = 0; t < n; ++t) {
            if (std::isfinite(stats[t])) per_day[t].push_back(stats[t]);
        }
    }
    std::vector<double> out(n, kNaN);
    for (std::size_t t = 0; t < n; ++t) {
        if (!per_day[t].empty()) out[t] = quantile_type7(std::move(per_day[t]), 1.0 - cfg.significance);
    }
    return out;
}

// ---------------------------------------------------------------------------

CriticalValueCache::CriticalValueCache(std::filesystem::path directory) : dir_(std::move(directory)) {}

CriticalValueCache CriticalValueCache::from_environment() {
    const char* env = std::getenv("BUBBLECAST_CACHE_DIR");
    if (env == nullptr || *env == '\0') return CriticalValueCache();
    return CriticalValueCache(std::filesystem::path(env));
}

namespace {

nlohmann::json cache_key(std::size_t n, const PsyConfig& cfg) {
    return nlohmann::json{{"n", n},
                          {"w0", cfg.window_for(n)},
                          {"lags", cfg.adf_lags},
                          {"significance", cfg.significance},
                          {"replications", cfg.mc_replications},
                          {"seed", cfg.rng_seed}};
}

}  // namespace

std::string CriticalValueCache::key_digest(std::size_t n, const PsyConfig& cfg) {
    return hex_digest(fnv1a64(cache_key(n, cfg).dump()));
}

std::vector<double> CriticalValueCache::get_or_compute(std::size_t n, const PsyConfig& cfg) {
    const std::string digest = key_digest(n, cfg);
    const nlohmann::json key = cache_key(n, cfg);
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(digest); it != memory_.end()) return it->second;

    std::filesystem::path file;
    if (dir_) {
        file = *dir_ / ("psy_cv_" + digest + ".json");
        std::ifstream in(file);
        if (in) {
            try {
                nlohmann::json j;
                in >> j;
                if (j.at("key") == key && j.at("values").size() == n) {
                    std::vector<double> values(n, kNaN);
                    for (std::size_t i = 0; i < n; ++i) {
                        if (!j["values"][i].is_null()) values[i] = j["values"][i].get<double>();
                    }
                    memory_.emplace(digest, values);
                    return values;
                }
            } catch (const nlohmann::json::exception&) {
                // Corrupt entry: fall through and recompute.
            }
        }
    }

    std::vector<double> values = simulate_critical_values(n, cfg);
    memory_.emplace(digest, values);
    if (dir_) {
        nlohmann::json arr = nlohmann::json::array();
        for (double v : values) arr.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
        const nlohmann::json doc{{"key", key}, {"values", arr}};
        static std::atomic<unsigned> counter{0};
        std::error_code ec;
        std::filesystem::create_directories(*dir_, ec);
        const auto tmp = file.string() + ".tmp" + std::to_string(counter++);
        {
            std::ofstream out(tmp);
            if (out) out << doc.dump() << '\n';
        }
        std::filesystem::rename(tmp, file, ec);
        if (ec) std::filesystem::remove(tmp, ec);
    }
    return values;
}

std::vector<double> critical_values(std::size_t n, const PsyConfig& cfg, CriticalValueCache* cache) {
    if (cache != nullptr) return cache->get_or_compute(n, cfg);
    return simulate_critical_values(n, cfg);
}

SpanList psy_label_with(const SeriesFrame& series, const PsyConfig& cfg,
                        std::span<const double> critical) {
    series.validate();
    const std::size_t n = series.size();
    const int w0 = cfg.window_for(n);
    if (n < static_cast<std::size_t>(w0) + 5) {
        throw DataError("series " + series.asset_id + " too short: " + std::to_string(n) +
                        " observations, need at least " + std::to_string(w0 + 5));
    }
    if (critical.size() != n) throw std::invalid_argument("psy_label: critical values length mismatch");
    std::vector<double> logp(n);
    for (std::size_t i = 0; i < n; ++i) logp[i] = std::log(series.close[i]);
    const std::vector<double> stats = bsadf_sequence(logp, cfg);

    SpanList spans;
    std::size_t i = 0;
    while (i < n) {
        if (!(stats[i] > critical[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && stats[j + 1] > critical[j + 1]) ++j;
        if (j > i) spans.push_back({static_cast<int>(i) + 1, static_cast<int>(j) + 1});
        i = j + 1;
    }
    return spans;
}

SpanList psy_label(const SeriesFrame& series, const PsyConfig& cfg, CriticalValueCache* cache) {
    series.validate();
    const std::size_t n = series.size();
    const int w0 = cfg.window_for(n);
    if (n < static_cast<std::size_t>(w0) + 5) {
        throw DataError("series " + series.asset_id + " too short: " + std::to_string(n) +
                        " observations, need at least " + std::to_string(w0 + 5));
    }
    const std::vector<double> cv = critical_values(n, cfg, cache);
    return psy_label_with(series, cfg, cv);
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("synth: " + m); };
    if (length < 2) fail("length must be >= 2");
    if (!(initial_price > 0.0)) fail("initial_price must be positive");
    if (!(shock >= 0.0)) fail("shock intensity must be >= 0");
    if (!(shock_floor >= 0.0 && shock_floor <= 0.2)) fail("shock_floor must lie in [0, 0.2]");
    if (!(innovation_std >= 0.0)) fail("innovation_std must be >= 0");
    if (!parse_iso_day(start_date)) fail("invalid start_date '" + start_date + "'");
    std::vector<Episode> sorted = episodes;
    std::sort(sorted.begin(), sorted.end(), [](const Episode& a, const Episode& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i].start < 1 || sorted[i].end > length || sorted[i].start > sorted[i].end) {
            fail("episode outside [1, length]");
        }
        if (i > 0 && sorted[i].start <= sorted[i - 1].end) fail("episodes overlap");
    }
}

SeriesFrame synth_series(const SynthConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.length);
    std::vector<int> regime(n + 1, 0);
    for (const Episode& e : cfg.episodes) {
        const int sign = e.direction == EpisodeDirection::boom ? 1 : -1;
        for (int d = e.start; d <= e.end; ++d) regime[static_cast<std::size_t>(d)] = sign;
    }

    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_real_distribution<double> uniform(-cfg.shock_floor, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SeriesFrame out;
    out.asset_id = cfg.asset_id;
    const std::int64_t day0 = *parse_iso_day(cfg.start_date);
    double logp = std::log(cfg.initial_price);
    for (std::size_t t = 1; t <= n; ++t) {
        const double b = uniform(rng);
        const double eps = cfg.innovation_std * normal(rng);
        const double up = std::abs(cfg.innovation_std * normal(rng));
        const double down = std::abs(cfg.innovation_std * normal(rng));
        if (t > 1) logp += regime[t] * cfg.shock * b + eps;
        const double close = std::exp(logp);
        out.dates.push_back(format_iso_day(day0 + static_cast<std::int64_t>(t) - 1));
        out.close.push_back(close);
        out.high.push_back(close * (1.0 + up));
        out.low.push_back(close * (1.0 - down));
    }
    return out;
}

}  // namespace bubblecast::labeler
