#include "bubblecast/pipeline.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace bubblecast::pipeline {

namespace {

using nlohmann::json;

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

json parse_json_line(const std::string& line, const std::string& source, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(where(source, lineno) + "invalid JSON: " + e.what());
    }
}

std::string require_string(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_string()) throw DataError(ctx + "missing string field '" + key + "'");
    return j[key].get<std::string>();
}

std::string require_date(const json& j, const char* key, const std::string& ctx) {
    std::string d = require_string(j, key, ctx);
    if (!parse_iso_day(d)) throw DataError(ctx + "invalid date '" + d + "'");
    return d;
}

Vector vector_from_json(const json& j, const std::string& ctx) {
    if (!j.is_array()) throw DataError(ctx + "feature vector must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw DataError(ctx + "feature vector holds a non-number");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
        if (!std::isfinite(v(static_cast<Eigen::Index>(i)))) throw DataError(ctx + "non-finite feature value");
    }
    return v;
}

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prices

std::vector<SeriesFrame> read_prices(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    struct Row {
        std::string date;
        double close, high, low;
        std::size_t line;
    };
    std::map<std::string, std::vector<Row>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (!header_seen) {
            static const std::vector<std::string_view> expected{"asset_id", "date", "open", "high", "low", "close"};
            if (fields != expected) {
                throw DataError(where(source, lineno) + "expected header asset_id,date,open,high,low,close");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 6) {
            throw DataError(where(source, lineno) + "expected 6 fields, found " + std::to_string(fields.size()));
        }
        if (fields[0].empty()) throw DataError(where(source, lineno) + "empty asset_id");
        if (!parse_iso_day(fields[1])) {
            throw DataError(where(source, lineno) + "invalid date '" + std::string(fields[1]) + "'");
        }
        double values[4];
        for (int k = 0; k < 4; ++k) {
            const auto v = parse_double(fields[2 + k]);
            if (!v || !std::isfinite(*v)) {
                throw DataError(where(source, lineno) + "malformed number '" + std::string(fields[2 + k]) + "'");
            }
            if (!(*v > 0.0)) throw DataError(where(source, lineno) + "non-positive price");
            values[k] = *v;
        }
        rows[std::string(fields[0])].push_back({std::string(fields[1]), values[3], values[1], values[2], lineno});
    }
    if (!header_seen) throw DataError(source + ": empty price file");

    std::vector<SeriesFrame> frames;
    for (auto& [asset, list] : rows) {
        std::stable_sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
        SeriesFrame f;
        f.asset_id = asset;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (i > 0 && list[i].date == list[i - 1].date) {
                throw DataError(where(source, list[i].line) + "duplicate date " + list[i].date + " for asset " + asset);
            }
            f.dates.push_back(list[i].date);
            f.close.push_back(list[i].close);
            f.high.push_back(list[i].high);
            f.low.push_back(list[i].low);
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<SeriesFrame> load_prices(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_prices(in, path.string());
}

void write_prices(std::ostream& out, std::span<const SeriesFrame> frames) {
    out << "asset_id,date,open,high,low,close\n";
    for (const SeriesFrame& f : frames) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double open = i == 0 ? f.close[0] : f.close[i - 1];
            out << f.asset_id << ',' << f.dates[i] << ',' << format_double(open) << ','
                << format_double(f.high[i]) << ',' << format_double(f.low[i]) << ','
                << format_double(f.close[i]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Text features

Vector featurize_text(std::string_view text, int dim) {
    if (dim < 1) throw std::invalid_argument("featurize_text: dim must be positive");
    Vector v = Vector::Zero(dim);
    std::string token;
    int tokens = 0;
    auto flush = [&] {
        if (token.empty()) return;
        v(static_cast<Eigen::Index>(fnv1a64(token) % static_cast<std::uint64_t>(dim))) += 1.0;
        ++tokens;
        token.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return v / std::sqrt(1.0 + tokens);
}

std::vector<TextFeatureRecord> read_text_features(std::istream& in, int expected_dim, const std::string& source) {
    if (expected_dim < 1) throw std::invalid_argument("expected feature dimension must be positive");
    std::vector<TextFeatureRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string ctx = where(source, lineno);
        const json j = parse_json_line(line, source, lineno);
        if (!j.is_object()) throw DataError(ctx + "expected a JSON object");
        TextFeatureRecord r;
        r.asset_id = require_string(j, "asset", ctx);
        r.date = require_date(j, "date", ctx);
        const bool has_vector = j.contains("vector");
        const bool has_text = j.contains("text");
        if (has_vector == has_text) throw DataError(ctx + "record needs exactly one of 'vector' or 'text'");
        if (has_vector) {
            r.vector = vector_from_json(j["vector"], ctx);
        } else {
            if (!j["text"].is_string()) throw DataError(ctx + "'text' must be a string");
            r.vector = featurize_text(j["text"].get<std::string>(), expected_dim);
        }
        if (r.vector.size() != expected_dim) {
            throw DataError(ctx + "feature dimension " + std::to_string(r.vector.size()) + " != expected " +
                            std::to_string(expected_dim));
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TextFeatureRecord> load_text_features(const std::filesystem::path& path, int expected_dim) {
    auto in = open_input(path);
    return read_text_features(in, expected_dim, path.string());
}

void write_text_features(std::ostream& out, std::span<const TextFeatureRecord> records) {
    for (const auto& r : records) {
        out << json{{"asset", r.asset_id}, {"date", r.date}, {"vector", vector_to_json(r.vector)}}.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Labels

std::vector<AssetLabels> read_labels(std::istream& in, const std::string& source) {
    std::vector<AssetLabels> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string ctx = where(source, lineno);
        const json j = parse_json_line(line, source, lineno);
        if (!j.is_object()) throw DataError(ctx + "expected a JSON object");
        AssetLabels a;
        a.asset_id = require_string(j, "asset", ctx);
        if (!seen.insert(a.asset_id).second) throw DataError(ctx + "duplicate asset " + a.asset_id);
        if (!j.contains("spans") || !j["spans"].is_array()) throw DataError(ctx + "missing array 'spans'");
        for (const json& s : j["spans"]) {
            DateSpan d{require_date(s, "start_date", ctx), require_date(s, "end_date", ctx)};
            if (!(d.start_date < d.end_date)) throw DataError(ctx + "span must end after it starts");
            a.spans.push_back(std::move(d));
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<AssetLabels> load_labels(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_labels(in, path.string());
}

void write_labels(std::ostream& out, std::span<const AssetLabels> labels) {
    for (const auto& a : labels) {
        json spans = json::array();
        for (const auto& s : a.spans) spans.push_back({{"start_date", s.start_date}, {"end_date", s.end_date}});
        out << json{{"asset", a.asset_id}, {"spans", spans}}.dump() << '\n';
    }
}

AssetLabels to_date_spans(const SeriesFrame& frame, const SpanList& spans) {
    AssetLabels out{frame.asset_id, {}};
    for (const auto& s : spans) {
        out.spans.push_back({frame.dates.at(static_cast<std::size_t>(s.start) - 1),
                             frame.dates.at(static_cast<std::size_t>(s.end) - 1)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Samples

std::string input_mode_name(InputMode mode) {
    switch (mode) {
        case InputMode::price: return "price";
        case InputMode::text: return "text";
        case InputMode::price_text: return "price_text";
    }
    return "text";
}

InputMode parse_input_mode(const std::string& name) {
    if (name == "price") return InputMode::price;
    if (name == "text") return InputMode::text;
    if (name == "price_text") return InputMode::price_text;
    throw std::invalid_argument("unknown input mode '" + name + "' (expected price, text or price_text)");
}

int Sample::feature_dim() const {
    if (lookback_features.empty() || lookback_features.front().empty()) return 0;
    return static_cast<int>(lookback_features.front().front().size());
}

std::vector<Vector> Sample::sequence(bool flat_stream) const {
    std::vector<Vector> seq;
    for (const auto& day : lookback_features) {
        if (flat_stream) {
            seq.insert(seq.end(), day.begin(), day.end());
        } else {
            Vector mean = Vector::Zero(day.front().size());
            for (const auto& v : day) mean += v;
            seq.push_back(mean / static_cast<double>(day.size()));
        }
    }
    return seq;
}

void Sample::validate(int max_bubbles) const {
    const std::string ctx = "sample " + asset_id + "@" + window_start_date + ": ";
    if (lookback_features.empty()) throw DataError(ctx + "empty lookback");
    const int dim = feature_dim();
    if (dim < 1) throw DataError(ctx + "empty lookback day");
    for (const auto& day : lookback_features) {
        if (day.empty()) throw DataError(ctx + "lookback day without features");
        for (const auto& v : day) {
            if (v.size() != dim) throw DataError(ctx + "inconsistent feature dimension");
            if (!v.allFinite()) throw DataError(ctx + "non-finite feature");
        }
    }
    const int t = lookahead();
    if (t < 2) throw DataError(ctx + "lookahead shorter than 2 days");
    if (!lookahead_dates.empty() && static_cast<int>(lookahead_dates.size()) != t) {
        throw DataError(ctx + "lookahead dates do not match labels");
    }
    std::vector<int> expect(static_cast<std::size_t>(t), 0);
    for (std::size_t i = 0; i < true_spans.size(); ++i) {
        const auto& s = true_spans[i];
        if (s.start < 1 || s.end > t || s.start >= s.end) throw DataError(ctx + "invalid span");
        if (i > 0 && true_spans[i - 1].end >= s.start) throw DataError(ctx + "spans overlap or are unsorted");
        for (int d = s.start; d <= s.end; ++d) expect[static_cast<std::size_t>(d) - 1] = 1;
    }
    if (expect != lookahead_labels) throw DataError(ctx + "labels disagree with spans");
    if (true_count != std::min(static_cast<int>(true_spans.size()), max_bubbles)) {
        throw DataError(ctx + "count disagrees with spans");
    }
}

void SampleOptions::validate() const {
    if (lookback < 1) throw std::invalid_argument("samples: lookback must be >= 1");
    if (lookahead < 2) throw std::invalid_argument("samples: lookahead must be >= 2");
    if (stride < 1) throw std::invalid_argument("samples: stride must be >= 1");
    if (max_texts_per_day < 1) throw std::invalid_argument("samples: max_texts_per_day must be >= 1");
    if (max_bubble_count() > lookahead / 2) throw std::invalid_argument("samples: max_bubbles exceeds floor(T/2)");
}

namespace {

// First k of a seeded partial Fisher-Yates shuffle, returned in ascending order.
std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (m - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::vector<Sample> make_samples(std::span<const SeriesFrame> frames, std::span<const TextFeatureRecord> features,
                                 std::span<const AssetLabels> labels, const SampleOptions& opts,
                                 SampleStats* stats) {
    opts.validate();
    SampleStats local;
    SampleStats& st = stats != nullptr ? *stats : local;
    st = SampleStats{};

    std::map<std::string, std::map<std::string, std::vector<const Vector*>>> by_day;
    for (const auto& r : features) by_day[r.asset_id][r.date].push_back(&r.vector);
    std::map<std::string, const AssetLabels*> label_of;
    for (const auto& a : labels) label_of[a.asset_id] = &a;

    std::vector<const SeriesFrame*> order;
    for (const auto& f : frames) order.push_back(&f);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->asset_id < b->asset_id; });
    std::set<std::string> priced;
    for (auto* f : order) priced.insert(f->asset_id);
    if (opts.input_mode != InputMode::price) {
        for (const auto& [asset, _] : by_day) {
            if (!priced.count(asset)) st.assets_without_prices.push_back(asset);
        }
    }

    const auto tau = static_cast<std::size_t>(opts.lookback);
    const auto horizon = static_cast<std::size_t>(opts.lookahead);
    const int b_max = opts.max_bubble_count();
    const bool use_text = opts.input_mode != InputMode::price;
    const bool use_price = opts.input_mode != InputMode::text;

    std::vector<Sample> out;
    for (const SeriesFrame* frame : order) {
        const SeriesFrame& f = *frame;
        f.validate();
        const std::size_t n = f.size();

        // Text records kept per row after subsampling.
        std::vector<std::vector<const Vector*>> texts(n);
        if (use_text) {
            auto it = by_day.find(f.asset_id);
            for (std::size_t i = 0; it != by_day.end() && i < n; ++i) {
                auto day = it->second.find(f.dates[i]);
                if (day == it->second.end()) continue;
                const auto& all = day->second;
                const auto cap = static_cast<std::size_t>(opts.max_texts_per_day);
                if (all.size() <= cap) {
                    texts[i] = all;
                } else {
                    ++st.subsampled_days;
                    for (std::size_t k : subsample_indices(all.size(), cap,
                                                           derive_seed(opts.seed, f.asset_id + "|" + f.dates[i]))) {
                        texts[i].push_back(all[k]);
                    }
                }
            }
        }

        // Labeled spans as 0-based row ranges.
        std::vector<std::pair<std::size_t, std::size_t>> rows;
        if (auto it = label_of.find(f.asset_id); it != label_of.end()) {
            for (const DateSpan& s : it->second->spans) {
                const auto lo = std::lower_bound(f.dates.begin(), f.dates.end(), s.start_date);
                const auto hi = std::upper_bound(f.dates.begin(), f.dates.end(), s.end_date);
                if (lo >= hi) continue;
                rows.emplace_back(static_cast<std::size_t>(lo - f.dates.begin()),
                                  static_cast<std::size_t>(hi - f.dates.begin()) - 1);
            }
            std::sort(rows.begin(), rows.end());
        }

        for (std::size_t i = 0; i + tau + horizon <= n; i += static_cast<std::size_t>(opts.stride)) {
            ++st.windows;
            const double ref = f.close[i + tau - 1];
            Sample s;
            s.asset_id = f.asset_id;
            s.window_start_date = f.dates[i];
            bool complete = true;
            for (std::size_t d = i; d < i + tau && complete; ++d) {
                Vector price(3);
                price << f.close[d] / ref, f.high[d] / ref, f.low[d] / ref;
                std::vector<Vector> day;
                if (!use_text) {
                    day.push_back(price);
                } else if (texts[d].empty()) {
                    complete = false;
                } else {
                    for (const Vector* v : texts[d]) {
                        if (use_price) {
                            Vector both(3 + v->size());
                            both << price, *v;
                            day.push_back(std::move(both));
                        } else {
                            day.push_back(*v);
                        }
                    }
                }
                s.lookback_features.push_back(std::move(day));
            }
            if (!complete) {
                ++st.dropped_missing_features;
                continue;
            }
            const std::size_t l0 = i + tau;
            const std::size_t l1 = l0 + horizon - 1;
            s.lookahead_start_date = f.dates[l0];
            s.window_end_date = f.dates[l1];
            s.lookahead_dates.assign(f.dates.begin() + static_cast<std::ptrdiff_t>(l0),
                                     f.dates.begin() + static_cast<std::ptrdiff_t>(l1) + 1);
            s.lookahead_labels.assign(horizon, 0);
            for (const auto& [a, b] : rows) {
                const std::size_t lo = std::max(a, l0);
                const std::size_t hi = std::min(b, l1);
                if (lo > hi) continue;
                if (lo == hi) {
                    ++st.dropped_short_spans;
                    continue;
                }
                s.true_spans.push_back({static_cast<int>(lo - l0) + 1, static_cast<int>(hi - l0) + 1});
                for (std::size_t d = lo; d <= hi; ++d) s.lookahead_labels[d - l0] = 1;
            }
            const int count = static_cast<int>(s.true_spans.size());
            if (count > b_max) ++st.clamped_counts;
            s.true_count = std::min(count, b_max);
            out.push_back(std::move(s));
            ++st.emitted;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split

nlohmann::json DatasetSplit::manifest() const {
    const double total = static_cast<double>(train.size() + validation.size() + test.size());
    auto ratio = [&](std::size_t k) { return total > 0 ? static_cast<double>(k) / total : 0.0; };
    return json{{"format", "bubblecast-split"},
                {"counts", {{"train", train.size()}, {"validation", validation.size()}, {"test", test.size()}}},
                {"ratios", {{"train", ratio(train.size())}, {"validation", ratio(validation.size())},
                            {"test", ratio(test.size())}}},
                {"validation_start_date", validation_start_date},
                {"test_start_date", test_start_date},
                {"purged", purged}};
}

DatasetSplit split_chronological(std::vector<Sample> samples, double val_frac, double test_frac) {
    if (!(val_frac > 0.0) || !(test_frac > 0.0) || !(val_frac + test_frac < 1.0)) {
        throw std::invalid_argument("split: fractions must be positive and sum to less than 1");
    }
    std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        return std::tie(a.window_start_date, a.asset_id, a.lookahead_start_date) <
               std::tie(b.window_start_date, b.asset_id, b.lookahead_start_date);
    });
    const std::size_t n = samples.size();
    std::vector<std::size_t> bounds;
    for (std::size_t p = 1; p < n; ++p) {
        if (samples[p].window_start_date != samples[p - 1].window_start_date) bounds.push_back(p);
    }
    if (bounds.size() < 2) {
        throw DataError("split: need at least 3 distinct window start dates, found " +
                        std::to_string(n == 0 ? 0 : bounds.size() + 1));
    }
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * val_frac)));
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_frac)));
    if (n_val + n_test >= n) throw DataError("split: too few samples for the requested fractions");
    const std::size_t t1 = n - n_val - n_test;
    const std::size_t t2 = n - n_test;

    auto nearest = [](std::span<const std::size_t> cand, std::size_t target) {
        std::size_t best = cand.front();
        for (std::size_t b : cand) {
            const auto d = [&](std::size_t x) { return x > target ? x - target : target - x; };
            if (d(b) < d(best)) best = b;
        }
        return best;
    };
    const std::size_t b1 = nearest(std::span(bounds).first(bounds.size() - 1), t1);
    const auto after = std::upper_bound(bounds.begin(), bounds.end(), b1);
    const std::size_t b2 = nearest(std::span(after, bounds.end()), t2);

    DatasetSplit split;
    split.validation_start_date = samples[b1].window_start_date;
    split.test_start_date = samples[b2].window_start_date;
    for (std::size_t i = 0; i < n; ++i) {
        Sample& s = samples[i];
        if (i < b1) {
            if (s.window_end_date >= split.validation_start_date) {
                ++split.purged;
            } else {
                split.train.push_back(std::move(s));
            }
        } else if (i < b2) {
            if (s.window_end_date >= split.test_start_date) {
                ++split.purged;
            } else {
                split.validation.push_back(std::move(s));
            }
        } else {
            split.test.push_back(std::move(s));
        }
    }
    return split;
}

// ---------------------------------------------------------------------------
// Samples file

json sample_to_json(const Sample& s) {
    json lookback = json::array();
    for (const auto& day : s.lookback_features) {
        json d = json::array();
        for (const auto& v : day) d.push_back(vector_to_json(v));
        lookback.push_back(std::move(d));
    }
    json spans = json::array();
    for (const auto& sp : s.true_spans) spans.push_back({sp.start, sp.end});
    return json{{"asset", s.asset_id},
                {"window_start_date", s.window_start_date},
                {"lookahead_start_date", s.lookahead_start_date},
                {"window_end_date", s.window_end_date},
                {"lookahead_dates", s.lookahead_dates},
                {"lookback", std::move(lookback)},
                {"labels", s.lookahead_labels},
                {"spans", std::move(spans)},
                {"count", s.true_count}};
}

Sample sample_from_json(const json& j) {
    if (!j.is_object()) throw DataError("sample must be a JSON object");
    Sample s;
    try {
        s.asset_id = j.at("asset").get<std::string>();
        s.window_start_date = j.at("window_start_date").get<std::string>();
        s.lookahead_start_date = j.value("lookahead_start_date", std::string());
        s.window_end_date = j.value("window_end_date", std::string());
        if (j.contains("lookahead_dates")) s.lookahead_dates = j["lookahead_dates"].get<std::vector<std::string>>();
        for (const json& day : j.at("lookback")) {
            std::vector<Vector> vs;
            for (const json& v : day) vs.push_back(vector_from_json(v, ""));
            s.lookback_features.push_back(std::move(vs));
        }
        s.lookahead_labels = j.at("labels").get<std::vector<int>>();
        for (const json& sp : j.at("spans")) {
            if (!sp.is_array() || sp.size() != 2) throw DataError("span must be [start, end]");
            s.true_spans.push_back({sp[0].get<int>(), sp[1].get<int>()});
        }
        s.true_count = j.at("count").get<int>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed sample: ") + e.what());
    }
    return s;
}

void write_samples(std::ostream& out, const SamplesHeader& header, const DatasetSplit& split) {
    out << json{{"format", "bubblecast-samples"},
                {"version", header.version},
                {"feature_dim", header.feature_dim},
                {"lookback", header.lookback},
                {"lookahead", header.lookahead},
                {"max_bubbles", header.max_bubbles},
                {"input_mode", input_mode_name(header.input_mode)},
                {"split", split.manifest()}}
               .dump()
        << '\n';
    auto emit = [&](const std::vector<Sample>& part, const char* name) {
        for (const auto& s : part) {
            json j = sample_to_json(s);
            j["split"] = name;
            out << j.dump() << '\n';
        }
    };
    emit(split.train, "train");
    emit(split.validation, "validation");
    emit(split.test, "test");
}

SamplesFile read_samples(std::istream& in, const std::string& source) {
    SamplesFile file;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string ctx = where(source, lineno);
        const json j = parse_json_line(line, source, lineno);
        if (!header_seen) {
            if (!j.is_object() || j.value("format", std::string()) != "bubblecast-samples") {
                throw DataError(ctx + "missing bubblecast-samples header line");
            }
            SamplesHeader& h = file.header;
            try {
                h.version = j.at("version").get<int>();
                h.feature_dim = j.at("feature_dim").get<int>();
                h.lookback = j.at("lookback").get<int>();
                h.lookahead = j.at("lookahead").get<int>();
                h.max_bubbles = j.at("max_bubbles").get<int>();
                h.input_mode = parse_input_mode(j.value("input_mode", std::string("text")));
            } catch (const std::exception& e) {
                throw DataError(ctx + "malformed header: " + e.what());
            }
            if (h.version != 1) throw DataError(ctx + "unsupported samples version " + std::to_string(h.version));
            if (j.contains("split") && j["split"].is_object()) {
                file.split.validation_start_date = j["split"].value("validation_start_date", std::string());
                file.split.test_start_date = j["split"].value("test_start_date", std::string());
                file.split.purged = j["split"].value("purged", std::size_t{0});
            }
            header_seen = true;
            continue;
        }
        Sample s;
        try {
            s = sample_from_json(j);
            if (s.feature_dim() != file.header.feature_dim) throw DataError("feature dimension differs from header");
            if (s.lookback() != file.header.lookback || s.lookahead() != file.header.lookahead) {
                throw DataError("window shape differs from header");
            }
            s.validate(file.header.max_bubbles);
        } catch (const DataError& e) {
            throw DataError(ctx + e.what());
        }
        const std::string part = j.value("split", std::string("test"));
        if (part == "train") {
            file.split.train.push_back(std::move(s));
        } else if (part == "validation") {
            file.split.validation.push_back(std::move(s));
        } else if (part == "test") {
            file.split.test.push_back(std::move(s));
        } else {
            throw DataError(ctx + "unknown split '" + part + "'");
        }
    }
    if (!header_seen) throw DataError(source + ": empty samples file");
    return file;
}

SamplesFile load_samples(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_samples(in, path.string());
}

std::vector<Sample> select_split(const DatasetSplit& split, const std::string& name) {
    if (name == "train") return split.train;
    if (name == "validation" || name == "val") return split.validation;
    if (name == "test") return split.test;
    if (name == "all") {
        std::vector<Sample> all = split.train;
        all.insert(all.end(), split.validation.begin(), split.validation.end());
        all.insert(all.end(), split.test.begin(), split.test.end());
        return all;
    }
    throw std::invalid_argument("unknown split '" + name + "' (expected train, validation, test or all)");
}

// ---------------------------------------------------------------------------
// Planted dataset

void PlantedConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("planted: " + m); };
    if (assets < 1) fail("assets must be >= 1");
    if (feature_dim < 2) fail("feature_dim must be >= 2");
    if (lookback < 1) fail("lookback must be >= 1");
    if (bubble_length < 2) fail("bubble_length must be >= 2");
    if (min_gap < 0 || max_gap < min_gap) fail("gaps must satisfy 0 <= min_gap <= max_gap");
    if (length < lookback + bubble_length + max_gap + 1) fail("length too short for one episode");
    if (!(noise >= 0.0) || !(signal_scale > 0.0)) fail("noise must be >= 0 and signal_scale > 0");
    if (texts_per_day_max < 1) fail("texts_per_day_max must be >= 1");
    if (!parse_iso_day(start_date)) fail("invalid start_date");
}

PlantedDataset synth_planted_dataset(const PlantedConfig& cfg) {
    cfg.validate();
    const auto dim = static_cast<Eigen::Index>(cfg.feature_dim);

    // Fixed patterns shared by every asset: index 0 is the signal, k >= 1 marks bubble day k.
    std::vector<Vector> patterns;
    {
        std::mt19937_64 rng(derive_seed(cfg.seed, "patterns"));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int k = 0; k <= cfg.bubble_length; ++k) {
            Vector v(dim);
            for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
            patterns.push_back(cfg.signal_scale * v / v.norm());
        }
    }

    PlantedDataset out;
    for (int a = 0; a < cfg.assets; ++a) {
        char id[16];
        std::snprintf(id, sizeof(id), "A%03d", a);
        const std::string asset = id;
        std::mt19937_64 rng(derive_seed(cfg.seed, asset));
        std::uniform_int_distribution<int> gap(cfg.min_gap, cfg.max_gap);
        std::uniform_int_distribution<int> texts(1, cfg.texts_per_day_max);
        std::normal_distribution<double> normal(0.0, 1.0);

        // pattern index per 1-based day, -1 when quiet
        std::vector<int> marker(static_cast<std::size_t>(cfg.length) + 1, -1);
        labeler::SynthConfig sc;
        sc.asset_id = asset;
        sc.start_date = cfg.start_date;
        sc.length = cfg.length;
        sc.shock = 0.05;
        sc.shock_floor = 0.0;
        sc.innovation_std = 0.01;
        sc.rng_seed = derive_seed(cfg.seed, asset + "|prices");
        int signal = 1 + std::uniform_int_distribution<int>(0, cfg.max_gap)(rng);
        while (signal + cfg.lookback + cfg.bubble_length - 1 <= cfg.length) {
            const int first = signal + cfg.lookback;
            const int last = first + cfg.bubble_length - 1;
            marker[static_cast<std::size_t>(signal)] = 0;
            for (int d = first; d <= last; ++d) marker[static_cast<std::size_t>(d)] = d - first + 1;
            sc.episodes.push_back({first, last, labeler::EpisodeDirection::boom});
            signal = last + 1 + gap(rng);
        }
        SeriesFrame frame = labeler::synth_series(sc);

        for (int d = 1; d <= cfg.length; ++d) {
            const int m = texts(rng);
            for (int r = 0; r < m; ++r) {
                Vector v(dim);
                for (Eigen::Index i = 0; i < dim; ++i) v(i) = cfg.noise * normal(rng);
                if (marker[static_cast<std::size_t>(d)] >= 0) v += patterns[static_cast<std::size_t>(marker[static_cast<std::size_t>(d)])];
                out.features.push_back({asset, frame.dates[static_cast<std::size_t>(d) - 1], std::move(v)});
            }
        }
        AssetLabels labels{asset, {}};
        for (const auto& e : sc.episodes) {
            labels.spans.push_back({frame.dates[static_cast<std::size_t>(e.start) - 1],
                                    frame.dates[static_cast<std::size_t>(e.end) - 1]});
        }
        out.labels.push_back(std::move(labels));
        out.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace bubblecast::pipeline
