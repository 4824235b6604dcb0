#include "bubblecast/network.hpp"

#include "bubblecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace bubblecast::network {

using diff::Graph;
using diff::Tensor;
using diff::Var;

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
    if (feature_dim < 1) fail("feature_dim must be >= 1");
    if (hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (lookback < 1) fail("lookback must be >= 1");
    if (lookahead < 2) fail("lookahead must be >= 2");
    const int b = max_bubble_count();
    if (b < 0 || b > lookahead / 2) fail("max_bubbles must lie in [0, floor(lookahead / 2)]");
    if (nms_threshold < 1) fail("nms_threshold must be >= 1");
}

namespace {

struct Shape {
    const char* name;
    Eigen::Index rows;
    Eigen::Index cols;
    Eigen::Index fan_in;
};

std::vector<Shape> parameter_shapes(const ModelConfig& cfg) {
    const Eigen::Index h = cfg.hidden_dim;
    const Eigen::Index f = cfg.feature_dim;
    const Eigen::Index k = cfg.count_classes();
    return {
        {"enc.W_z", h, h, h},   {"enc.U_z", h, f, f},    {"enc.b_z", h, 1, h},
        {"enc.W_r", h, h, h},   {"enc.U_r", h, f, f},    {"enc.b_r", h, 1, h},
        {"enc.W_h", h, h, h},   {"enc.U_h", h, f, f},    {"enc.b_h", h, 1, h},
        {"attn.W", h, h, h},
        {"dec.W_z", h, h, h},   {"dec.b_z", h, 1, h},
        {"dec.W_r", h, h, h},   {"dec.b_r", h, 1, h},
        {"dec.W_h", h, h, h},   {"dec.b_h", h, 1, h},
        {"span.W_start", 1, h, h}, {"span.W_end", 1, h, h},
        {"count.W1", h, h, h},  {"count.b1", h, 1, h},
        {"count.W2", k, h, h},  {"count.b2", k, 1, h},
    };
}

struct EncoderParams {
    Var W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h;

    explicit EncoderParams(Graph& g)
        : W_z(g.param("enc.W_z")), U_z(g.param("enc.U_z")), b_z(g.param("enc.b_z")),
          W_r(g.param("enc.W_r")), U_r(g.param("enc.U_r")), b_r(g.param("enc.b_r")),
          W_h(g.param("enc.W_h")), U_h(g.param("enc.U_h")), b_h(g.param("enc.b_h")) {}
};

// z_t = sigma(log_o(W^z (x) h (+) U^z (x) x (+) b^z)), likewise r_t;
// hbar_t = psi(x)(W^h diag(r_t) (x) h (+) U^h (x) x (+) b^h);
// h_t = h (+) diag(z_t) (x) (-h (+) hbar_t).
Var cell(const EncoderParams& p, Var h, Var x, const diff::DiffGeometry& geo) {
    using namespace diff;
    Var gate_z = sigmoid(geo.log0(
        geo.add(geo.add(geo.matmul(p.W_z, h), geo.matmul(p.U_z, x)), geo.exp0(p.b_z))));
    Var gate_r = sigmoid(geo.log0(
        geo.add(geo.add(geo.matmul(p.W_r, h), geo.matmul(p.U_r, x)), geo.exp0(p.b_r))));
    Var reset_h = geo.exp0(matvec(p.W_h, mul(gate_r, geo.log0(h))));
    Var candidate =
        geo.tanh(geo.add(geo.add(reset_h, geo.matmul(p.U_h, x)), geo.exp0(p.b_h)));
    Var step = geo.diag_matmul(gate_z, geo.add(geo.negate(h), candidate));
    return geo.add(h, step);
}

Var input_point(Graph& g, const Vector& q, const diff::DiffGeometry& geo) {
    return geo.exp0(g.constant(q));
}

void check_features(std::span<const Vector> features, const ModelConfig& cfg) {
    if (features.empty()) throw std::invalid_argument("encode: empty feature sequence");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != cfg.feature_dim) {
            throw ShapeError("encode: feature " + std::to_string(i) + " has dimension " +
                             std::to_string(features[i].size()) + ", expected " +
                             std::to_string(cfg.feature_dim));
        }
        if (!features[i].allFinite()) {
            throw std::invalid_argument("encode: feature " + std::to_string(i) + " is not finite");
        }
    }
}

Vector to_vector(const Tensor& t) { return Eigen::Map<const Vector>(t.data(), t.size()); }

}  // namespace

diff::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    diff::ParamStore store;
    std::mt19937_64 rng(seed);
    for (const Shape& s : parameter_shapes(cfg)) {
        const double a = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor t(s.rows, s.cols);
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
        store.add(s.name, std::move(t));
    }
    return store;
}

diff::ParamStore zero_params(const ModelConfig& cfg) {
    cfg.validate();
    diff::ParamStore store;
    for (const Shape& s : parameter_shapes(cfg)) store.add(s.name, Tensor::Zero(s.rows, s.cols));
    return store;
}

void validate_params(const diff::ParamStore& params, const ModelConfig& cfg) {
    const auto shapes = parameter_shapes(cfg);
    for (const Shape& s : shapes) {
        if (!params.contains(s.name)) throw DataError(std::string("missing parameter '") + s.name + "'");
        const Tensor& t = params.value(s.name);
        if (t.rows() != s.rows || t.cols() != s.cols) {
            throw DataError(std::string("parameter '") + s.name + "' has shape " +
                            std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                            ", expected " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
        }
        if (!t.allFinite()) throw DataError(std::string("parameter '") + s.name + "' is not finite");
    }
    if (params.size() != shapes.size()) throw DataError("unexpected extra parameters");
}

Var hgru_cell(Graph& g, Var h_prev, Var x, const diff::DiffGeometry& geo) {
    EncoderParams p(g);
    return cell(p, h_prev, x, geo);
}

EncoderVars encode(Graph& g, std::span<const Vector> features, const ModelConfig& cfg) {
    check_features(features, cfg);
    const diff::DiffGeometry geo(cfg.geometry_mode);
    const EncoderParams p(g);

    EncoderVars out;
    Var h = g.constant(Tensor::Zero(cfg.hidden_dim, 1));
    for (const Vector& q : features) {
        h = cell(p, h, input_point(g, q, geo), geo);
        out.hidden_states.push_back(h);
    }

    std::vector<Var> tangent;
    tangent.reserve(out.hidden_states.size());
    for (Var s : out.hidden_states) tangent.push_back(geo.log0(s));

    if (!cfg.attention_enabled) {
        out.info = tangent.back();
        out.attention = g.constant(Tensor::Constant(1, 1, 1.0));
        return out;
    }
    // Bilinear score against the final state as query: gamma_j ~ log_o(h_j)^T W log_o(h_n).
    Var keyed = diff::matvec(g.param("attn.W"), tangent.back());
    std::vector<Var> scores;
    scores.reserve(tangent.size());
    for (Var t : tangent) scores.push_back(diff::dot(t, keyed));
    out.attention = diff::softmax(diff::stack(scores));
    Var info = diff::scale_by(tangent[0], diff::element(out.attention, 0));
    for (std::size_t j = 1; j < tangent.size(); ++j) {
        info = diff::add(info, diff::scale_by(tangent[j],
                                              diff::element(out.attention,
                                                            static_cast<Eigen::Index>(j))));
    }
    out.info = info;
    return out;
}

std::pair<Var, Var> span_probs(Graph& g, Var info, const ModelConfig& cfg) {
    using namespace diff;
    if (info.rows() != cfg.hidden_dim || info.cols() != 1) {
        throw ShapeError("span_probs: info vector must have hidden_dim entries");
    }
    Var W_z = g.param("dec.W_z"), b_z = g.param("dec.b_z");
    Var W_r = g.param("dec.W_r"), b_r = g.param("dec.b_r");
    Var W_h = g.param("dec.W_h"), b_h = g.param("dec.b_h");
    Var w_start = g.param("span.W_start"), w_end = g.param("span.W_end");

    std::vector<Var> starts;
    std::vector<Var> ends;
    Var state = info;
    for (int t = 0; t < cfg.lookahead; ++t) {
        Var z = sigmoid(add(matvec(W_z, state), b_z));
        Var r = sigmoid(add(matvec(W_r, state), b_r));
        Var c = tanh(add(matvec(W_h, mul(r, state)), b_h));
        state = add(state, mul(z, sub(c, state)));
        starts.push_back(sigmoid(matvec(w_start, state)));
        ends.push_back(sigmoid(matvec(w_end, state)));
    }
    return {stack(starts), stack(ends)};
}

Var count_probs(Graph& g, Var info, const ModelConfig& cfg) {
    using namespace diff;
    if (info.rows() != cfg.hidden_dim || info.cols() != 1) {
        throw ShapeError("count_bubbles: info vector must have hidden_dim entries");
    }
    Var hidden = tanh(add(matvec(g.param("count.W1"), info), g.param("count.b1")));
    Var logits = add(matvec(g.param("count.W2"), hidden), g.param("count.b2"));
    return softmax(logits);
}

ForwardVars build_forward(Graph& g, std::span<const Vector> features, const ModelConfig& cfg) {
    ForwardVars out;
    out.encoder = encode(g, features, cfg);
    std::tie(out.p_start, out.p_end) = span_probs(g, out.encoder.info, cfg);
    out.count_probs = count_probs(g, out.encoder.info, cfg);
    return out;
}

// ---------------------------------------------------------------------------

Vector hgru_cell(const Vector& h_prev, const Vector& x, const diff::ParamStore& params,
                 GeometryMode mode) {
    Graph g(params);
    const diff::DiffGeometry geo(mode);
    if (mode == GeometryMode::hyperbolic) {
        // Validates both inputs as ball points.
        std::ignore = geometry::BallPoint(h_prev);
        std::ignore = geometry::BallPoint(x);
    }
    return to_vector(hgru_cell(g, g.constant(h_prev), g.constant(x), geo).value());
}

EncoderOutput encode(std::span<const Vector> features, const diff::ParamStore& params,
                     const ModelConfig& cfg) {
    Graph g(params);
    const EncoderVars vars = encode(g, features, cfg);
    EncoderOutput out;
    for (Var h : vars.hidden_states) out.hidden_states.push_back(to_vector(h.value()));
    out.info = to_vector(vars.info.value());
    out.attention = to_vector(vars.attention.value());
    return out;
}

SpanProbabilities span_probs(const Vector& info, const diff::ParamStore& params,
                             const ModelConfig& cfg) {
    if (!info.allFinite()) throw std::invalid_argument("span_probs: info vector is not finite");
    Graph g(params);
    auto [start, end] = span_probs(g, g.constant(info), cfg);
    return {to_vector(start.value()), to_vector(end.value())};
}

int argmax_first(const Vector& values) {
    if (values.size() == 0) throw std::invalid_argument("argmax of an empty vector");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<int>(best);
}

CountPrediction count_bubbles(const Vector& info, const diff::ParamStore& params,
                              const ModelConfig& cfg) {
    if (!info.allFinite()) throw std::invalid_argument("count_bubbles: info vector is not finite");
    Graph g(params);
    CountPrediction out;
    out.probs = to_vector(count_probs(g, g.constant(info), cfg).value());
    out.count = argmax_first(out.probs);
    return out;
}

SpanList extract_spans(const SpanProbabilities& probs, int max_spans, int threshold) {
    const int days = static_cast<int>(probs.p_start.size());
    if (probs.p_end.size() != days) throw ShapeError("extract_spans: p_start and p_end differ in length");
    SpanList accepted;
    if (max_spans <= 0) return accepted;

    struct Candidate {
        double score;
        BubbleSpan span;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(days * (days - 1) / 2));
    for (int s = 1; s <= days; ++s) {
        for (int e = s + 1; e <= days; ++e) {
            candidates.push_back({probs.p_start[s - 1] * probs.p_end[e - 1], {s, e}});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.span < b.span;
    });
    for (const Candidate& c : candidates) {
        if (static_cast<int>(accepted.size()) >= max_spans) break;
        const bool suppressed = std::any_of(accepted.begin(), accepted.end(), [&](const BubbleSpan& a) {
            return overlap_days(a, c.span) >= threshold;
        });
        if (!suppressed) accepted.push_back(c.span);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

ForwardResult forward(std::span<const Vector> features, const diff::ParamStore& params,
                      const ModelConfig& cfg) {
    Graph g(params);
    const ForwardVars vars = build_forward(g, features, cfg);
    ForwardResult out;
    for (Var h : vars.encoder.hidden_states) out.encoder.hidden_states.push_back(to_vector(h.value()));
    out.encoder.info = to_vector(vars.encoder.info.value());
    out.encoder.attention = to_vector(vars.encoder.attention.value());
    out.spans = {to_vector(vars.p_start.value()), to_vector(vars.p_end.value())};
    out.count.probs = to_vector(vars.count_probs.value());
    out.count.count = argmax_first(out.count.probs);
    out.extracted = extract_spans(out.spans, out.count.count, cfg.nms_threshold);
    return out;
}

}  // namespace bubblecast::network
